#pragma once
#include <cstdint>
#include <random>
#include <string>

namespace mcf {

/// Seeded generator with platform-independent uniform and normal draws.
/// The std distributions are implementation-defined, so draws are derived
/// directly from the engine output to keep fixed-seed runs bit-identical
/// across standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : m_engine(seed) {}

  /// Independent stream for (seed, index), e.g. one per generated sample.
  static Rng stream(std::uint64_t seed, std::uint64_t index);

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1)
  std::uint64_t next() { return m_engine(); }
  std::size_t index(std::size_t n);       // uniform in [0, n)

  std::string state() const;
  void set_state(const std::string &state);

private:
  std::mt19937_64 m_engine;
};

} // namespace mcf
