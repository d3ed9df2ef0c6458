#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace unionlm {

// Error taxonomy. The C API maps these onto status codes; everything else
// (std::exception and below) becomes ULM_ERR_INTERNAL.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct InvalidArgError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};

std::string strformat(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

// FNV-1a, used for vocab hashes, checkpoint checksums and the eval split.
uint64_t fnv1a64(std::string_view s);
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 14695981039346656037ull);
std::string hex64(uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample std (n-1); 0 when n < 2
};
MeanStd sample_mean_std(const std::vector<double>& xs);

// Deterministic RNG. mt19937_64 is pinned by the standard; the gaussian is
// hand-rolled Box-Muller because std::normal_distribution's algorithm is not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1]
  double uniform_pos() { return 1.0 - uniform(); }

  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  size_t below(size_t n) { return static_cast<size_t>(gen_() % n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace unionlm
