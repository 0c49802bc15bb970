#pragma once

// Binary eigenvalue-stream cache. Layout (all little-endian):
//   magic   8 bytes  "CRNTSTRM"
//   version u32      (= 1)
//   d_H     u32
//   order_m f64
//   count   u64      number of records
//   entries u64      total multiplicity over the records
//   lab_len u32, label bytes
//   records: f64 eigenvalue, u32 multiplicity   (fixed width, packed)

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>

#include "carnot/spectral_models.hpp"

namespace carnot {

namespace cache_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write((const char*)b, 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
  os.write((const char*)b, 8);
}
inline void put_f64(std::ostream& os, double v) {
  put_u64(os, std::bit_cast<std::uint64_t>(v));
}
inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read((char*)b, 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= (std::uint32_t)b[i] << (8 * i);
  return true;
}
inline bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read((char*)b, 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= (std::uint64_t)b[i] << (8 * i);
  return true;
}
inline bool get_f64(std::istream& is, double& v) {
  std::uint64_t u;
  if (!get_u64(is, u)) return false;
  v = std::bit_cast<double>(u);
  return true;
}

inline constexpr char kMagic[9] = "CRNTSTRM";

}  // namespace cache_detail

// Writes the stream prefix with eigenvalues <= max_lambda (and at most
// max_entries distinct records). Returns the number of records written.
inline std::uint64_t write_stream_cache(const SpectralStream& s,
                                        const std::string& path,
                                        double max_lambda,
                                        std::uint64_t max_entries = ~0ull) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write stream cache: " + path);
  using namespace cache_detail;
  os.write(kMagic, 8);
  put_u32(os, 1);
  put_u32(os, (std::uint32_t)s.d_H);
  put_f64(os, s.order_m);
  const auto count_pos = os.tellp();
  put_u64(os, 0);
  put_u64(os, 0);
  put_u32(os, (std::uint32_t)s.label.size());
  os.write(s.label.data(), (std::streamsize)s.label.size());

  auto cur = s.open();
  SpectralEntry e;
  std::uint64_t written = 0, total = 0;
  while (written < max_entries && cur->next(e)) {
    if (e.value > max_lambda) break;
    if (e.multiplicity > 0xffffffffull)
      throw std::runtime_error("stream cache: multiplicity exceeds u32");
    put_f64(os, e.value);
    put_u32(os, (std::uint32_t)e.multiplicity);
    total += e.multiplicity;
    ++written;
  }
  os.seekp(count_pos);
  put_u64(os, written);
  put_u64(os, total);
  os.flush();
  if (!os) throw std::runtime_error("stream cache write failed: " + path);
  return written;
}

// Writes records until the total multiplicity reaches min_entries.
inline std::uint64_t write_stream_cache_entries(const SpectralStream& s,
                                                const std::string& path,
                                                std::uint64_t min_entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write stream cache: " + path);
  using namespace cache_detail;
  os.write(kMagic, 8);
  put_u32(os, 1);
  put_u32(os, (std::uint32_t)s.d_H);
  put_f64(os, s.order_m);
  const auto count_pos = os.tellp();
  put_u64(os, 0);
  put_u64(os, 0);
  put_u32(os, (std::uint32_t)s.label.size());
  os.write(s.label.data(), (std::streamsize)s.label.size());

  auto cur = s.open();
  SpectralEntry e;
  std::uint64_t written = 0, total = 0;
  while (total < min_entries && cur->next(e)) {
    if (e.multiplicity > 0xffffffffull)
      throw std::runtime_error("stream cache: multiplicity exceeds u32");
    put_f64(os, e.value);
    put_u32(os, (std::uint32_t)e.multiplicity);
    total += e.multiplicity;
    ++written;
  }
  os.seekp(count_pos);
  put_u64(os, written);
  put_u64(os, total);
  os.flush();
  if (!os) throw std::runtime_error("stream cache write failed: " + path);
  return written;
}

struct CachedStreamInfo {
  std::string label;
  double order_m = 0.0;
  int d_H = 0;
  std::uint64_t records = 0;
  std::uint64_t total_entries = 0;  // sum of multiplicities
  double last_value = 0.0;          // horizon covered by the cache
};

inline std::optional<CachedStreamInfo> stream_cache_info(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  using namespace cache_detail;
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    return std::nullopt;
  std::uint32_t version, dh, lab_len;
  CachedStreamInfo info;
  if (!get_u32(is, version) || version != 1) return std::nullopt;
  if (!get_u32(is, dh) || !get_f64(is, info.order_m) ||
      !get_u64(is, info.records) || !get_u64(is, info.total_entries) ||
      !get_u32(is, lab_len))
    return std::nullopt;
  info.d_H = (int)dh;
  info.label.resize(lab_len);
  if (!is.read(info.label.data(), lab_len)) return std::nullopt;
  if (info.records > 0) {
    is.seekg((std::streamoff)(info.records - 1) * 12, std::ios::cur);
    if (!get_f64(is, info.last_value)) return std::nullopt;
  }
  return info;
}

// Replays a cache file as a stream (finite: ends at the cached horizon).
inline SpectralStream load_stream_cache(const std::string& path) {
  auto info = stream_cache_info(path);
  if (!info) throw std::runtime_error("bad or missing stream cache: " + path);

  class FileCursor : public EigenvalueCursor {
   public:
    FileCursor(const std::string& path, std::uint64_t records,
               std::streamoff offset)
        : is_(path, std::ios::binary), remaining_(records) {
      is_.seekg(offset);
    }
    bool next(SpectralEntry& out) override {
      if (remaining_ == 0) return false;
      std::uint32_t mult;
      if (!cache_detail::get_f64(is_, out.value) ||
          !cache_detail::get_u32(is_, mult))
        throw std::runtime_error("truncated stream cache");
      out.multiplicity = mult;
      --remaining_;
      return true;
    }

   private:
    std::ifstream is_;
    std::uint64_t remaining_;
  };

  const std::streamoff offset =
      8 + 4 + 4 + 8 + 8 + 8 + 4 + (std::streamoff)info->label.size();
  SpectralStream s;
  s.label = info->label;
  s.order_m = info->order_m;
  s.d_H = info->d_H;
  s.volume_note = "cached";
  const std::uint64_t records = info->records;
  s.open = [path, records, offset]() -> std::unique_ptr<EigenvalueCursor> {
    return std::make_unique<FileCursor>(path, records, offset);
  };
  return s;
}

}  // namespace carnot
