#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pepco/autodiff.hpp"

namespace testing_support {

inline pepco::ad::Tensor random_tensor(std::mt19937_64& gen, pepco::ad::Shape shape, double lo = -1.0,
                                       double hi = 1.0) {
  pepco::ad::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = dist(gen);
  return t;
}

// Central differences of a scalar function of one tensor, independent of the
// library's own checker.
inline std::vector<double> numeric_gradient(const std::function<double(const pepco::ad::Tensor&)>& f,
                                            const pepco::ad::Tensor& x, double h = 1e-5) {
  std::vector<double> g(x.size());
  pepco::ad::Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-4});
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pepco_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
