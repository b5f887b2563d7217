#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace strongnoise {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011).
/// A pure function of (counter, key): no state, so any draw can be
/// regenerated from its coordinates alone.
class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += kW0;
      key[1] += kW1;
      round(ctr, key);
    }
    return ctr;
  }

private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static constexpr void round(Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Draw purposes, kept in separate counter lanes so that adding a consumer
/// never shifts the draws of another.
enum class Lane : std::uint32_t {
  Increment = 0,
  BridgeMax = 1,
  BridgeMin = 2,
  Auxiliary = 3,
};

/// Independent Brownian increments for one path, keyed by (seed, path id).
/// Step k, substep s and lane l map to a unique Philox counter, so equal
/// (seed, path id, grid) reproduce the same increments bit for bit and
/// distinct path ids never share draws.
class BrownianStream {
public:
  constexpr BrownianStream() = default;
  constexpr BrownianStream(std::uint64_t seed, std::uint32_t path_id) noexcept
      : seed_(seed), path_id_(path_id) {}

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint32_t path_id() const noexcept { return path_id_; }

  /// Stream for another path under the same seed.
  constexpr BrownianStream with_path(std::uint32_t path_id) const noexcept {
    return {seed_, path_id};
  }

  Philox4x32::Counter block(std::uint64_t step, Lane lane, std::uint32_t substep = 0) const noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                                  path_id_, (static_cast<std::uint32_t>(lane) << 24) | (substep & 0xFFFFFFu)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    return Philox4x32::generate(ctr, key);
  }

  /// Uniform on the open interval (0, 1) with 52 random bits.
  double uniform(std::uint64_t step, Lane lane, std::uint32_t substep = 0) const noexcept {
    const auto b = block(step, lane, substep);
    return to_unit(b[0], b[1]);
  }

  /// Pair of independent uniforms on (0, 1).
  std::array<double, 2> uniform_pair(std::uint64_t step, Lane lane, std::uint32_t substep = 0) const noexcept {
    const auto b = block(step, lane, substep);
    return {to_unit(b[0], b[1]), to_unit(b[2], b[3])};
  }

  /// Standard normal by Box-Muller on one block.
  double normal(std::uint64_t step, Lane lane = Lane::Increment, std::uint32_t substep = 0) const noexcept {
    const auto u = uniform_pair(step, lane, substep);
    return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
  }

  /// Both Box-Muller outputs of one block.
  std::array<double, 2> normal_pair(std::uint64_t step, Lane lane = Lane::Increment,
                                    std::uint32_t substep = 0) const noexcept {
    const auto u = uniform_pair(step, lane, substep);
    const double r = std::sqrt(-2.0 * std::log(u[0]));
    const double th = 2.0 * std::numbers::pi * u[1];
    return {r * std::cos(th), r * std::sin(th)};
  }

  static constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = (std::uint64_t{hi} << 20) | (std::uint64_t{lo} >> 12);
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
  }

private:
  std::uint64_t seed_ = 0;
  std::uint32_t path_id_ = 0;
};

} // namespace strongnoise
