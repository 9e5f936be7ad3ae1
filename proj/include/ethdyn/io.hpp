// io.hpp - CSV tables, SHA-256 checksums and the binary spectrum cache.
//
// Cache layout (all integers and floats little-endian):
//   8 bytes   magic "ETHDYNSP"
//   u32       format version (1)
//   32 bytes  SHA-256 of the key text
//   u64       key length, then the key text itself (model echo + sector options)
//   u32       number of sectors; u8 whether eigenvectors are stored
//   per sector: i32 k, i32 parity, i32 flip, u64 dim, u8 shares_partner,
//               dim f64 eigenvalues, then (if stored and not shared) dim*dim
//               f64 eigenvector entries column-major in sector coordinates
//   32 bytes  SHA-256 of everything above
#pragma once

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "lattice.hpp"
#include "sectors.hpp"
#include "spectrum.hpp"

static_assert(std::endian::native == std::endian::little, "the cache format assumes a little-endian host");

namespace ethdyn::io {

namespace fs = std::filesystem;

inline std::array<unsigned char, 32> sha256(std::string_view bytes) {
  std::array<unsigned char, 32> out{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1)
    throw Error("sha256: digest failed");
  return out;
}

inline std::string hex(std::span<const unsigned char> b) {
  std::ostringstream os;
  for (unsigned char c : b) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return os.str();
}

inline std::string sha256_hex(std::string_view bytes) { return hex(sha256(bytes)); }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

/// Writes through a temporary file and renames, so readers never see a torn file.
inline void write_file_atomic(const fs::path& p, std::string_view bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

// --- CSV ---------------------------------------------------------------------------------

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  const std::vector<double>& column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return columns[i];
    throw InvalidArgument("csv: no column '" + std::string(name) + "'");
  }

  void add(std::string name, std::vector<double> values) {
    if (!columns.empty() && values.size() != rows()) throw InvalidArgument("csv: column length mismatch");
    header.push_back(std::move(name));
    columns.push_back(std::move(values));
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
    s += '\n';
    for (std::size_t r = 0; r < rows(); ++r) {
      for (std::size_t c = 0; c < columns.size(); ++c) s += (c ? "," : "") + format_double(columns[c][r]);
      s += '\n';
    }
    return s;
  }
};

inline void write_csv(const fs::path& p, const CsvTable& t) { write_file_atomic(p, t.to_string()); }

inline CsvTable read_csv(const fs::path& p) {
  std::istringstream in(read_file(p));
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: empty file " + p.string());
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  }
  t.columns.resize(t.header.size());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ls, cell, ',')) {
      if (c >= t.columns.size()) throw InvalidArgument("csv: ragged row in " + p.string());
      t.columns[c++].push_back(std::stod(cell));
    }
    if (c != t.columns.size()) throw InvalidArgument("csv: ragged row in " + p.string());
  }
  return t;
}

// --- spectrum cache ------------------------------------------------------------------------

inline constexpr char kCacheMagic[8] = {'E', 'T', 'H', 'D', 'Y', 'N', 'S', 'P'};
inline constexpr std::uint32_t kCacheVersion = 1;

inline std::string cache_key(const SpinChainSpec& spec, const SectorOptions& opt) {
  return spec.describe() + ";reflection=" + (opt.reflection ? "1" : "0") + ";flip=" + (opt.flip ? "1" : "0");
}

/// File name derived from the key hash.
inline fs::path cache_path(const fs::path& dir, const SpinChainSpec& spec, const SectorOptions& opt) {
  return dir / ("spectrum-" + sha256_hex(cache_key(spec, opt)).substr(0, 16) + ".bin");
}

namespace detail {

template <typename T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  void doubles(std::span<double> out) {
    const std::size_t n = out.size() * sizeof(double);
    need(n);
    std::memcpy(out.data(), s_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw Error("cache: truncated file");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline bool shares_partner(const Spectrum& s) { return s.label && s.basis && 2 * s.label->k > s.basis->L(); }

}  // namespace detail

/// Serializes a sector-resolved spectrum built by diagonalize_sectors.
inline std::string encode_eigensystem(const SpinChainSpec& spec, const SectorOptions& opt, const EigenSystem& sys) {
  const std::string key = cache_key(spec, opt);
  bool vectors = !sys.empty();
  for (const auto& s : sys) {
    if (!s.label || !s.basis) throw InvalidArgument("cache: only sector-resolved spectra can be cached");
    if (s.complex_vectors) throw InvalidArgument("cache: complex eigenvectors are not cacheable");
    vectors = vectors && s.vectors != nullptr;
  }
  std::string out(kCacheMagic, sizeof kCacheMagic);
  detail::put<std::uint32_t>(out, kCacheVersion);
  const auto h = sha256(key);
  out.append(reinterpret_cast<const char*>(h.data()), h.size());
  detail::put<std::uint64_t>(out, key.size());
  out += key;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(sys.size()));
  detail::put<std::uint8_t>(out, vectors ? 1 : 0);
  for (const auto& s : sys) {
    detail::put<std::int32_t>(out, s.label->k);
    detail::put<std::int32_t>(out, s.label->parity);
    detail::put<std::int32_t>(out, s.label->flip);
    detail::put<std::uint64_t>(out, s.dim());
    const bool shared = detail::shares_partner(s);
    detail::put<std::uint8_t>(out, shared ? 1 : 0);
    out.append(reinterpret_cast<const char*>(s.energies.data()), s.energies.size() * sizeof(double));
    if (vectors && !shared)
      out.append(reinterpret_cast<const char*>(s.vectors->data.data()), s.vectors->data.size() * sizeof(double));
  }
  const auto check = sha256(out);
  out.append(reinterpret_cast<const char*>(check.data()), check.size());
  return out;
}

inline void save_eigensystem(const fs::path& p, const SpinChainSpec& spec, const SectorOptions& opt,
                             const EigenSystem& sys) {
  write_file_atomic(p, encode_eigensystem(spec, opt, sys));
}

/// Loads a cached spectrum, or nullopt when the file is missing, corrupt,
/// belongs to another model, or lacks requested eigenvectors. Sector bases are
/// rebuilt from the model and must match the stored labels and dimensions.
inline std::optional<EigenSystem> load_eigensystem(const fs::path& p, const SpinChainSpec& spec,
                                                   const SectorOptions& opt, bool want_vectors) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    const std::string blob = read_file(p);
    if (blob.size() < sizeof kCacheMagic + 32) return std::nullopt;
    const std::string_view body(blob.data(), blob.size() - 32);
    const auto check = sha256(body);
    if (std::memcmp(check.data(), blob.data() + body.size(), 32) != 0) {
      warn("cache: checksum mismatch in " + p.string() + ", rebuilding");
      return std::nullopt;
    }
    detail::Reader r(body);
    if (r.bytes(sizeof kCacheMagic) != std::string_view(kCacheMagic, sizeof kCacheMagic)) return std::nullopt;
    if (r.get<std::uint32_t>() != kCacheVersion) return std::nullopt;
    const std::string key = cache_key(spec, opt);
    const auto h = sha256(key);
    if (r.bytes(32) != std::string_view(reinterpret_cast<const char*>(h.data()), 32)) return std::nullopt;
    const auto klen = r.get<std::uint64_t>();
    if (r.bytes(klen) != key) return std::nullopt;
    const auto n = r.get<std::uint32_t>();
    const bool vectors = r.get<std::uint8_t>() != 0;
    if (want_vectors && !vectors) return std::nullopt;

    auto bases = sector_decompose(spec, opt);
    if (bases.size() != n) return std::nullopt;
    EigenSystem sys(n);
    std::vector<char> shared(n, 0);
    for (std::uint32_t i = 0; i < n; ++i) {
      SectorLabel lab;
      lab.k = r.get<std::int32_t>();
      lab.parity = r.get<std::int32_t>();
      lab.flip = r.get<std::int32_t>();
      const auto dim = r.get<std::uint64_t>();
      shared[i] = static_cast<char>(r.get<std::uint8_t>());
      if (!(bases[i].label == lab) || bases[i].dim() != dim) return std::nullopt;
      sys[i].label = lab;
      sys[i].energies.resize(dim);
      r.doubles(sys[i].energies);
      if (vectors && !shared[i]) {
        auto m = std::make_shared<RealMatrix>(dim, dim);
        r.doubles(m->data);
        if (want_vectors) sys[i].vectors = std::move(m);
      }
      sys[i].basis = std::make_shared<const SectorBasis>(std::move(bases[i]));
    }
    if (r.pos() != body.size()) return std::nullopt;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!shared[i] || !want_vectors) continue;
      SectorLabel p = *sys[i].label;
      p.k = sys[i].basis->L() - p.k;
      for (std::uint32_t j = 0; j < n; ++j)
        if (*sys[j].label == p) sys[i].vectors = sys[j].vectors;
      if (!sys[i].vectors) return std::nullopt;
    }
    return sys;
  } catch (const Error& e) {
    warn("cache: unreadable " + p.string() + " (" + e.what() + "), rebuilding");
    return std::nullopt;
  }
}

/// Cached sector diagonalization: loads when possible, otherwise computes and stores.
inline EigenSystem cached_eigensystem(const fs::path& dir, const SpinChainSpec& spec, bool want_vectors,
                                      std::size_t cap = kDefaultDenseCap, const SectorOptions& opt = {}) {
  const auto p = cache_path(dir, spec, opt);
  if (auto hit = load_eigensystem(p, spec, opt, want_vectors)) return std::move(*hit);
  auto sys = diagonalize_sectors(spec, want_vectors, cap, opt);
  save_eigensystem(p, spec, opt, sys);
  return sys;
}

}  // namespace ethdyn::io
