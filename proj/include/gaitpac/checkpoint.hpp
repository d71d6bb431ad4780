#ifndef GAITPAC_CHECKPOINT_HPP
#define GAITPAC_CHECKPOINT_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gaitpac/errors.hpp"
#include "gaitpac/policy.hpp"

namespace gaitpac {

// Binary layout (all integers and floats little-endian):
//   char[8]  magic "GPACCKPT"
//   u32      layout version (1)
//   u32      kind (1 params, 2 distribution [mean, log_var], 3 policy set)
//   u32      input dim, u32 hidden count, u32 hidden[count], u32 output dim
//   u64      config hash
//   u64      training env-index range begin, u64 end (half-open; 0,0 if none)
//   u64      vector count, u64 vector length
//   f64      vector count * vector length values
inline constexpr std::array<char, 8> kCheckpointMagic{'G', 'P', 'A', 'C', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : std::uint32_t { kParams = 1, kDistribution = 2, kPolicySet = 3 };

struct Checkpoint {
  CheckpointKind kind = CheckpointKind::kParams;
  PolicyArch arch;
  std::uint64_t config_hash = 0;
  std::uint64_t range_begin = 0;
  std::uint64_t range_end = 0;
  std::vector<Eigen::VectorXd> vectors;
};

namespace detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint truncated");
  return to_little(v);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.kind));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arch.input));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arch.hidden.size()));
  for (int h : ck.arch.hidden) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(h));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.arch.output));
  detail::put<std::uint64_t>(os, ck.config_hash);
  detail::put<std::uint64_t>(os, ck.range_begin);
  detail::put<std::uint64_t>(os, ck.range_end);
  const std::uint64_t len = param_count(ck.arch);
  detail::put<std::uint64_t>(os, ck.vectors.size());
  detail::put<std::uint64_t>(os, len);
  for (const auto& v : ck.vectors) {
    if (static_cast<std::uint64_t>(v.size()) != len) throw FormatError("checkpoint vector length mismatch");
    for (Eigen::Index i = 0; i < v.size(); ++i) detail::put<double>(os, v[i]);
  }
  if (!os) throw FormatError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw FormatError("not a policy checkpoint");
  if (detail::get<std::uint32_t>(is) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  Checkpoint ck;
  const auto kind = detail::get<std::uint32_t>(is);
  if (kind < 1 || kind > 3) throw FormatError("unknown checkpoint kind");
  ck.kind = static_cast<CheckpointKind>(kind);
  ck.arch.input = static_cast<int>(detail::get<std::uint32_t>(is));
  const auto hidden = detail::get<std::uint32_t>(is);
  if (hidden > 64) throw FormatError("implausible hidden layer count");
  ck.arch.hidden.clear();
  for (std::uint32_t i = 0; i < hidden; ++i) ck.arch.hidden.push_back(static_cast<int>(detail::get<std::uint32_t>(is)));
  ck.arch.output = static_cast<int>(detail::get<std::uint32_t>(is));
  ck.config_hash = detail::get<std::uint64_t>(is);
  ck.range_begin = detail::get<std::uint64_t>(is);
  ck.range_end = detail::get<std::uint64_t>(is);
  const auto count = detail::get<std::uint64_t>(is);
  const auto len = detail::get<std::uint64_t>(is);
  if (len != param_count(ck.arch)) throw FormatError("checkpoint vector length does not match its architecture");
  if (count > (1u << 20)) throw FormatError("implausible checkpoint vector count");
  for (std::uint64_t k = 0; k < count; ++k) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(len));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = detail::get<double>(is);
    ck.vectors.push_back(std::move(v));
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is);
}

inline PolicyDistribution distribution_from(const Checkpoint& ck) {
  if (ck.kind != CheckpointKind::kDistribution || ck.vectors.size() != 2) {
    throw FormatError("checkpoint does not hold a distribution");
  }
  return {ck.vectors[0], ck.vectors[1]};
}

}  // namespace gaitpac

#endif  // GAITPAC_CHECKPOINT_HPP
