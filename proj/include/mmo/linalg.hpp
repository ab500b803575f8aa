#ifndef MMO_LINALG_HPP
#define MMO_LINALG_HPP

#include <array>
#include <cmath>
#include <complex>

namespace mmo {

struct Vec2 {
  double a = 0, b = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double c) const { return {c * x, c * y, c * z}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Row-major 3x3 matrix, just enough for the linearization machinery.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 I;
    I.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return I;
  }

  double& operator()(int r, int c) { return m[3 * r + c]; }
  double operator()(int r, int c) const { return m[3 * r + c]; }

  Mat3 operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }
  Mat3 operator*(double c) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = c * m[i];
    return r;
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  Mat3 inverse() const {
    const double d = det();
    Mat3 r;
    r.m = {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8],
           m[1] * m[5] - m[2] * m[4], m[5] * m[6] - m[3] * m[8],
           m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
           m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7],
           m[0] * m[4] - m[1] * m[3]};
    for (auto& v : r.m) v /= d;
    return r;
  }

  double frobenius() const {
    double s = 0;
    for (double v : m) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double s = 0;
    for (double v : m) s = std::max(s, std::abs(v));
    return s;
  }
};

// Eigenvalues of a real 2x2 matrix [[a,b],[c,d]].
inline std::array<std::complex<double>, 2> eig2(double a, double b, double c,
                                                double d) {
  const double tr = a + d;
  const double disc = tr * tr - 4.0 * (a * d - b * c);
  if (disc >= 0) {
    const double s = std::sqrt(disc);
    return {std::complex<double>((tr + s) / 2, 0),
            std::complex<double>((tr - s) / 2, 0)};
  }
  const double s = std::sqrt(-disc);
  return {std::complex<double>(tr / 2, s / 2),
          std::complex<double>(tr / 2, -s / 2)};
}

// Positive semidefiniteness of a symmetric 3x3 via all principal minors.
inline bool is_psd(const Mat3& a, double tol) {
  const auto& m = a.m;
  const double m01 = m[0] * m[4] - m[1] * m[3];
  const double m02 = m[0] * m[8] - m[2] * m[6];
  const double m12 = m[4] * m[8] - m[5] * m[7];
  return m[0] >= -tol && m[4] >= -tol && m[8] >= -tol && m01 >= -tol &&
         m02 >= -tol && m12 >= -tol && a.det() >= -tol;
}

}  // namespace mmo

#endif  // MMO_LINALG_HPP
