#include <cmath>
#include <mcf/core/error.h>
#include <mcf/core/rng.h>
#include <sstream>

namespace mcf {

Rng Rng::stream(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over (seed, index) so neighbouring indices decorrelate
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return Rng(mix(mix(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1)));
}

double Rng::uniform() {
  return static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Marsaglia polar method; one draw per call, the partner is discarded.
  while (true) {
    double u = 2.0 * uniform() - 1.0;
    double v = 2.0 * uniform() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0)
      return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0)
    throw Error(ErrorKind::InvalidInput, "Rng::index called with n = 0");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << m_engine;
  return os.str();
}

void Rng::set_state(const std::string &state) {
  std::istringstream is(state);
  is >> m_engine;
  if (!is)
    throw Error(ErrorKind::Schema, "malformed rng state");
}

} // namespace mcf
