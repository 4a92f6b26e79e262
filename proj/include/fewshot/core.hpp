#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fewshot {

enum class ErrorKind {
  contract,  // precondition violated by the caller
  config,    // invalid configuration or flag combination
  io,        // file could not be read or written
  format,    // malformed input file or layout/version mismatch
  runtime,   // failure while running (e.g. black-box evaluation)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

/// Box-constrained continuous domain.
class SearchSpace {
 public:
  SearchSpace(std::vector<double> lower, std::vector<double> upper);
  static SearchSpace cube(std::size_t dim, double lo, double hi);

  std::size_t dim() const { return lower_.size(); }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  double width(std::size_t i) const { return upper_[i] - lower_[i]; }

  bool operator==(const SearchSpace&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// A point in original (unnormalized) units. Produced by clamp_to_space or
/// denormalize_point, which keep it inside the space.
struct Point {
  std::vector<double> coords;
  bool operator==(const Point&) const = default;
};

std::vector<double> normalize_point(const Point& p, const SearchSpace& space);
/// Inverse of normalize_point. Unit coordinates are clipped to [0,1] first.
Point denormalize_point(std::span<const double> unit, const SearchSpace& space);
Point clamp_to_space(std::span<const double> raw, const SearchSpace& space);
double euclidean_distance(std::span<const double> a, std::span<const double> b);

/// The eight candidate generators. The enumeration order is the one-hot
/// order in the feature layout and must not change.
enum class GeneratorId : std::uint8_t { LHS, GBM_LCB, GGAPP, CMA, CMA_N, TUR, REP, RER };

inline constexpr std::size_t kGeneratorCount = 8;
inline constexpr std::array<GeneratorId, kGeneratorCount> kAllGenerators = {
    GeneratorId::LHS, GeneratorId::GBM_LCB, GeneratorId::GGAPP, GeneratorId::CMA,
    GeneratorId::CMA_N, GeneratorId::TUR, GeneratorId::REP, GeneratorId::RER};

constexpr std::size_t index_of(GeneratorId g) { return static_cast<std::size_t>(g); }
std::string_view generator_name(GeneratorId g);
std::optional<GeneratorId> parse_generator(std::string_view name);

struct EvaluationRecord {
  Point point;
  double value = 0.0;
  GeneratorId generator = GeneratorId::LHS;
  std::optional<double> predicted;
  int epoch = 1;
};

/// Black-box objective (minimization). Implementations must be deterministic
/// and safe to call concurrently.
class BlackBox {
 public:
  virtual ~BlackBox() = default;
  virtual const SearchSpace& space() const = 0;
  virtual double evaluate(const Point& p) const = 0;
  virtual std::string name() const = 0;
};

class FunctionBlackBox final : public BlackBox {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  FunctionBlackBox(SearchSpace space, Fn fn, std::string name = "function")
      : space_(std::move(space)), fn_(std::move(fn)), name_(std::move(name)) {}
  const SearchSpace& space() const override { return space_; }
  double evaluate(const Point& p) const override { return fn_(p.coords); }
  std::string name() const override { return name_; }

 private:
  SearchSpace space_;
  Fn fn_;
  std::string name_;
};

/// Wraps another black box and counts calls.
class CountingBlackBox final : public BlackBox {
 public:
  explicit CountingBlackBox(const BlackBox& inner) : inner_(inner) {}
  const SearchSpace& space() const override { return inner_.space(); }
  double evaluate(const Point& p) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.evaluate(p);
  }
  std::string name() const override { return inner_.name(); }
  std::size_t calls() const { return calls_.load(); }

 private:
  const BlackBox& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// Epoch budget: E synchronous rounds of B parallel evaluations.
struct Budget {
  int epochs = 16;
  int batch = 8;
  int evaluations() const { return epochs * batch; }
};

}  // namespace fewshot
