#ifndef MMO_IO_HPP
#define MMO_IO_HPP

#include <string>

namespace mmo::io {

// Writes via a temp file in the same directory plus rename, so readers never
// observe a partially written artifact.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// printf %.17g formatting shared by all numeric artifacts.
std::string fmt17(double v);

}  // namespace mmo::io

#endif  // MMO_IO_HPP
