#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace memr {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(r) * c) throw std::invalid_argument("Mat: size mismatch");
  }

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Mat row_vec(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Mat(1, n, std::move(v));
  }

  Mat transposed() const {
    Mat t(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Mat row(int i) const {
    Mat r(1, cols);
    std::memcpy(r.data.data(), data.data() + static_cast<size_t>(i) * cols, sizeof(double) * cols);
    return r;
  }

  void set_row(int i, const Mat& r) {
    std::memcpy(data.data() + static_cast<size_t>(i) * cols, r.data.data(), sizeof(double) * cols);
  }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
  Mat c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + static_cast<size_t>(i) * a.cols;
    double* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + static_cast<size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Mat operator+(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("add: shape mismatch");
  Mat c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

inline Mat operator-(const Mat& a, const Mat& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("sub: shape mismatch");
  Mat c = a;
  for (size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

inline Mat operator*(double s, const Mat& a) {
  Mat c = a;
  for (double& x : c.data) x *= s;
  return c;
}

inline double dot(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double fro_norm(const Mat& a) { return std::sqrt(dot(a, a)); }

inline double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// Round through float32: keeps persisted parameter state exactly representable
// in the checkpoint format, so save/load and resume are bit-exact.
inline double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

inline void round_f32_inplace(Mat& m) {
  for (double& x : m.data) x = round_f32(x);
}

// Deterministic RNG. Uses mt19937_64 directly with explicit transforms so the
// stream does not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // [0, n)
  uint64_t uniform_int(uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  // Box-Muller, no caching: two draws per sample, fixed consumption order.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Mat normal_mat(int r, int c, double stddev) {
    Mat m(r, c);
    for (double& x : m.data) x = stddev * normal();
    return m;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string state_string() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state_string(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
    if (is.fail()) throw std::runtime_error("Rng: bad serialized state");
  }

 private:
  std::mt19937_64 gen_;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_finite(const Mat& m, const char* what) {
  if (!m.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace memr
