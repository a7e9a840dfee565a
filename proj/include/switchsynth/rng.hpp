#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace switchsynth {

/// Identifier written into reports so ensembles can be matched to the exact
/// generator and transform that produced them.
inline constexpr const char* kRngName = "philox4x64-10/box-muller/v1";

/**
 * Philox4x64-10 counter-based generator (Salmon et al., Random123).
 *
 * A (key, counter) pair maps to four 64-bit outputs with no internal state, so
 * any realization or candidate can be generated independently of the others.
 */
class Philox4x64 {
 public:
  using Counter = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  static Counter block(Counter ctr, Key key);
};

/**
 * Sequential view over one Philox stream. The stream is identified by the key
 * and words 1..3 of the counter; word 0 is the block index.
 */
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1) with 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller; pairs are cached.
  double normal();

 private:
  Philox4x64::Key key_;
  std::uint64_t stream_;
  std::uint64_t substream_;
  std::uint64_t block_ = 0;
  Philox4x64::Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable 64-bit derivation of a per-stage seed from the user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

/// FNV-1a over bytes; used for input-file fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace switchsynth
