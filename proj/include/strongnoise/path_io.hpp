#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/model_config.hpp"
#include "strongnoise/simulate.hpp"

namespace strongnoise {

/// Binary layout: the magic line "SNPATH1\n", a little-endian uint64 header
/// length, a JSON header (model snapshot, seed, path id, scheme, dt), a
/// uint64 point count, then the times column and the values column as
/// little-endian float64.
inline constexpr char kPathMagic[] = "SNPATH1\n";

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ValidationError("path file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void put_column(std::ostream& os, const std::vector<double>& col) {
  for (double x : col) put_u64(os, std::bit_cast<std::uint64_t>(x));
}

inline std::vector<double> get_column(std::istream& is, std::uint64_t n) {
  std::vector<double> col(n);
  for (auto& x : col) x = std::bit_cast<double>(get_u64(is));
  return col;
}

} // namespace detail

inline Json path_header(const Path& p) {
  return Json{{"model", p.model_snapshot},     {"seed", p.seed},
              {"path_id", p.path_id},          {"scheme", std::string(scheme_name(p.scheme))},
              {"dt", p.dt},                    {"keep_every", p.keep_every},
              {"positivity_violations", p.positivity_violations}};
}

inline void write_path_binary(const Path& p, const std::string& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error("cannot open '" + file + "' for writing");
  const std::string header = path_header(p).dump();
  os.write(kPathMagic, sizeof(kPathMagic) - 1);
  detail::put_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put_u64(os, p.times.size());
  detail::put_column(os, p.times);
  detail::put_column(os, p.values);
  if (!os) throw Error("write to '" + file + "' failed");
}

inline Path read_path_binary(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot open '" + file + "'");
  char magic[sizeof(kPathMagic) - 1];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kPathMagic, sizeof(magic)) != 0)
    throw ValidationError("'" + file + "' is not a path file");
  const std::uint64_t hlen = detail::get_u64(is);
  if (hlen > (1u << 24)) throw ValidationError("path header too large");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw ValidationError("path file truncated");
  const Json h = Json::parse(header);
  Path p;
  p.model_snapshot = h.at("model");
  p.seed = h.at("seed").get<std::uint64_t>();
  p.path_id = h.at("path_id").get<std::uint32_t>();
  p.scheme = scheme_from_name(h.at("scheme").get<std::string>());
  p.dt = h.at("dt").get<double>();
  p.keep_every = h.value("keep_every", std::uint64_t{1});
  p.positivity_violations = h.value("positivity_violations", std::uint64_t{0});
  if (p.model_snapshot.value("family", "") != "custom") p.model = model_from_json(p.model_snapshot);
  const std::uint64_t n = detail::get_u64(is);
  p.times = detail::get_column(is, n);
  p.values = detail::get_column(is, n);
  return p;
}

/// CSV with a "time,value" header; values are written with full precision.
inline void write_path_csv(const Path& p, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw Error("cannot open '" + file + "' for writing");
  os << "time,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < p.times.size(); ++i) os << p.times[i] << ',' << p.values[i] << '\n';
  if (!os) throw Error("write to '" + file + "' failed");
}

inline Path read_path_csv(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw Error("cannot open '" + file + "'");
  std::string line;
  if (!std::getline(is, line) || line != "time,value") throw ValidationError("'" + file + "': expected header time,value");
  Path p;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError("'" + file + "': malformed line '" + line + "'");
    p.times.push_back(std::stod(line.substr(0, comma)));
    p.values.push_back(std::stod(line.substr(comma + 1)));
  }
  return p;
}

} // namespace strongnoise
