#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hashfield/access.hpp"
#include "hashfield/common.hpp"

namespace hashfield {

// ---------------------------------------------------------------------------
// Binary trace format
//
//   header (32 bytes, little-endian):
//     char[4] magic "I3DT", u32 version, u32 density_table_size, u32 color_table_size,
//     u32 density_levels, u32 color_levels, u32 features_per_entry, u32 reserved (0)
//   records (16 bytes each):
//     u32 iteration, u32 address, u32 point_id, u32 flags
//   flags: bit 0 phase (1 = backward), bit 1 branch (1 = density), bit 2 kind (1 = write),
//          bits 3-5 cube vertex, bits 8-15 level

inline constexpr std::array<char, 4> kTraceMagic{'I', '3', 'D', 'T'};
inline constexpr std::uint32_t kTraceVersion = 1;
inline constexpr std::size_t kTraceHeaderBytes = 32;
inline constexpr std::size_t kTraceRecordBytes = 16;

struct TraceHeader {
  std::uint32_t density_table_size = 0;
  std::uint32_t color_table_size = 0;
  std::uint32_t density_levels = 1;
  std::uint32_t color_levels = 1;
  std::uint32_t features_per_entry = 2;

  std::uint32_t table_size(Branch b) const { return b == Branch::Density ? density_table_size : color_table_size; }
  std::uint32_t levels(Branch b) const { return b == Branch::Density ? density_levels : color_levels; }
  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct AccessTrace {
  TraceHeader header;
  std::vector<AccessRecord> records;
};

namespace detail {

inline void put_u32(char* dst, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) dst[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
}
inline std::uint32_t get_u32(const char* src) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(src[i])} << (8 * i);
  return v;
}

}  // namespace detail

inline std::uint32_t pack_flags(const AccessRecord& r) {
  return static_cast<std::uint32_t>(r.phase == Phase::Backward) | (static_cast<std::uint32_t>(r.branch == Branch::Density) << 1) |
         (static_cast<std::uint32_t>(r.kind == AccessKind::Write) << 2) | (std::uint32_t{r.vertex & 7u} << 3) |
         (std::uint32_t{r.level} << 8);
}

inline void encode_record(const AccessRecord& r, char* dst) {
  detail::put_u32(dst, r.iteration);
  detail::put_u32(dst + 4, r.address);
  detail::put_u32(dst + 8, r.point_id);
  detail::put_u32(dst + 12, pack_flags(r));
}

inline AccessRecord decode_record(const char* src) {
  AccessRecord r;
  r.iteration = detail::get_u32(src);
  r.address = detail::get_u32(src + 4);
  r.point_id = detail::get_u32(src + 8);
  const std::uint32_t f = detail::get_u32(src + 12);
  r.phase = (f & 1u) ? Phase::Backward : Phase::Forward;
  r.branch = (f & 2u) ? Branch::Density : Branch::Color;
  r.kind = (f & 4u) ? AccessKind::Write : AccessKind::Read;
  r.vertex = static_cast<std::uint8_t>((f >> 3) & 7u);
  r.level = static_cast<std::uint8_t>((f >> 8) & 0xFFu);
  return r;
}

inline void encode_header(const TraceHeader& h, char* dst) {
  std::memcpy(dst, kTraceMagic.data(), 4);
  detail::put_u32(dst + 4, kTraceVersion);
  detail::put_u32(dst + 8, h.density_table_size);
  detail::put_u32(dst + 12, h.color_table_size);
  detail::put_u32(dst + 16, h.density_levels);
  detail::put_u32(dst + 20, h.color_levels);
  detail::put_u32(dst + 24, h.features_per_entry);
  detail::put_u32(dst + 28, 0);
}

/// Streams records to disk through a fixed-size buffer.
class TraceFileWriter final : public TraceSink {
 public:
  TraceFileWriter(const std::filesystem::path& path, const TraceHeader& header) : out_(path, std::ios::binary) {
    if (!out_) throw ParseError("cannot open trace for writing: " + path.string());
    char buf[kTraceHeaderBytes];
    encode_header(header, buf);
    out_.write(buf, kTraceHeaderBytes);
    buffer_.reserve(kFlushBytes);
  }
  ~TraceFileWriter() override {
    try {
      close();
    } catch (...) {
    }
  }
  std::uint64_t count() const { return count_; }

 protected:
  void append(const AccessRecord& r) override {
    char buf[kTraceRecordBytes];
    encode_record(r, buf);
    buffer_.insert(buffer_.end(), buf, buf + kTraceRecordBytes);
    ++count_;
    if (buffer_.size() >= kFlushBytes) flush();
  }
  void finish() override {
    flush();
    out_.close();
  }

 private:
  static constexpr std::size_t kFlushBytes = 1 << 20;
  void flush() {
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out_) throw ParseError("failed writing trace");
    buffer_.clear();
  }
  std::ofstream out_;
  std::vector<char> buffer_;
  std::uint64_t count_ = 0;
};

inline void write_trace(const std::filesystem::path& path, const AccessTrace& trace) {
  TraceFileWriter w(path, trace.header);
  for (const auto& r : trace.records) w.record(r);
  w.close();
}

/// Reads and validates a whole trace file; parse errors name the failing byte offset.
inline AccessTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ParseError("cannot open trace: " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (size < kTraceHeaderBytes)
    throw ParseError("trace truncated in header at offset " + std::to_string(size) + " (need " +
                     std::to_string(kTraceHeaderBytes) + " bytes)");
  std::vector<char> bytes(size);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (std::memcmp(bytes.data(), kTraceMagic.data(), 4) != 0) throw ParseError("bad trace magic at offset 0");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kTraceVersion) throw ParseError("unsupported trace version " + std::to_string(version) + " at offset 4");

  AccessTrace t;
  t.header.density_table_size = detail::get_u32(bytes.data() + 8);
  t.header.color_table_size = detail::get_u32(bytes.data() + 12);
  t.header.density_levels = detail::get_u32(bytes.data() + 16);
  t.header.color_levels = detail::get_u32(bytes.data() + 20);
  t.header.features_per_entry = detail::get_u32(bytes.data() + 24);

  const std::size_t payload = size - kTraceHeaderBytes;
  if (payload % kTraceRecordBytes != 0) {
    const std::size_t offset = kTraceHeaderBytes + payload / kTraceRecordBytes * kTraceRecordBytes;
    throw ParseError("trace truncated: partial record at offset " + std::to_string(offset));
  }
  t.records.reserve(payload / kTraceRecordBytes);
  for (std::size_t off = kTraceHeaderBytes; off < size; off += kTraceRecordBytes) {
    AccessRecord r = decode_record(bytes.data() + off);
    if (r.address >= t.header.table_size(r.branch) || r.level >= t.header.levels(r.branch))
      throw ParseError("record address or level out of range at offset " + std::to_string(off));
    t.records.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Views

template <typename Pred>
std::vector<AccessRecord> filter_records(std::span<const AccessRecord> records, Pred&& pred) {
  std::vector<AccessRecord> out;
  for (const auto& r : records)
    if (pred(r)) out.push_back(r);
  return out;
}

inline std::vector<AccessRecord> branch_view(std::span<const AccessRecord> records, Branch b) {
  return filter_records(records, [b](const AccessRecord& r) { return r.branch == b; });
}

// ---------------------------------------------------------------------------
// Address-pattern analyses

namespace detail {

struct QueryKey {
  std::uint32_t iteration;
  std::uint32_t point_id;
  std::uint8_t branch;
  std::uint8_t level;
  friend bool operator==(const QueryKey&, const QueryKey&) = default;
};
struct QueryKeyHash {
  std::size_t operator()(const QueryKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.iteration} << 32) ^ k.point_id;
    h ^= (std::uint64_t{k.branch} << 56) ^ (std::uint64_t{k.level} << 48);
    h *= 0x9E3779B97F4A7C15ull;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Per query (point, level, branch): address per cube vertex, or -1 when absent.
struct QueryGroups {
  std::array<std::int64_t, 8> address{-1, -1, -1, -1, -1, -1, -1, -1};
};

/// Collects forward reads per query in first-seen order.
inline std::vector<QueryGroups> collect_forward_queries(std::span<const AccessRecord> records) {
  std::unordered_map<QueryKey, std::size_t, QueryKeyHash> index;
  std::vector<QueryGroups> out;
  for (const auto& r : records) {
    if (r.phase != Phase::Forward || r.kind != AccessKind::Read) continue;
    const QueryKey key{r.iteration, r.point_id, static_cast<std::uint8_t>(r.branch), r.level};
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) out.emplace_back();
    auto& slot = out[it->second].address[r.vertex & 7u];
    if (slot >= 0) throw ParseError("malformed trace: duplicate vertex read for point " + std::to_string(r.point_id));
    slot = r.address;
  }
  for (const auto& q : out) {
    for (int g = 0; g < 4; ++g) {
      const bool a = q.address[2 * g] >= 0, b = q.address[2 * g + 1] >= 0;
      if (a != b) throw ParseError("malformed trace: group with one member");
    }
  }
  return out;
}

}  // namespace detail

struct IntraGroupReport {
  std::map<std::int64_t, std::uint64_t> histogram;  ///< signed delta -> count
  std::uint64_t pairs = 0;

  /// Fraction of pairs with |delta| <= limit.
  double fraction_within(std::int64_t limit) const {
    if (pairs == 0) return 0.0;
    std::uint64_t n = 0;
    for (const auto& [d, c] : histogram)
      if (d >= -limit && d <= limit) n += c;
    return static_cast<double>(n) / static_cast<double>(pairs);
  }
};

/// Signed post-mod delta address(x+1) - address(x) for each two-vertex group of every forward query.
inline IntraGroupReport intra_group_distances(std::span<const AccessRecord> records) {
  IntraGroupReport rep;
  for (const auto& q : detail::collect_forward_queries(records)) {
    for (int g = 0; g < 4; ++g) {
      if (q.address[2 * g] < 0) continue;
      ++rep.histogram[q.address[2 * g + 1] - q.address[2 * g]];
      ++rep.pairs;
    }
  }
  return rep;
}

struct InterGroupReport {
  std::uint64_t pairs = 0;
  double mean = 0.0;
  double median = 0.0;
};

/// |delta| between the x-lower members of every pair of groups of the same query.
inline InterGroupReport inter_group_distances(std::span<const AccessRecord> records) {
  std::vector<std::int64_t> dists;
  for (const auto& q : detail::collect_forward_queries(records)) {
    for (int a = 0; a < 4; ++a) {
      if (q.address[2 * a] < 0) continue;
      for (int b = a + 1; b < 4; ++b) {
        if (q.address[2 * b] < 0) continue;
        dists.push_back(std::abs(q.address[2 * a] - q.address[2 * b]));
      }
    }
  }
  InterGroupReport rep;
  rep.pairs = dists.size();
  if (dists.empty()) return rep;
  double sum = 0.0;
  for (auto d : dists) sum += static_cast<double>(d);
  rep.mean = sum / static_cast<double>(dists.size());
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double upper = static_cast<double>(dists[mid]);
  if (dists.size() % 2 == 1) {
    rep.median = upper;
  } else {
    const double lower = static_cast<double>(*std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid)));
    rep.median = 0.5 * (lower + upper);
  }
  return rep;
}

/// Table-qualified address so the two branches never alias.
constexpr std::uint64_t unique_key(const AccessRecord& r) {
  return (std::uint64_t{static_cast<std::uint8_t>(r.branch)} << 40) | (std::uint64_t{r.level} << 32) | r.address;
}

/// Distinct addresses per window of `window` consecutive records. Non-overlapping windows
/// (stride = window) by default; a trailing partial window is dropped. `overlapping` slides by one.
inline std::vector<std::size_t> unique_window_series(std::span<const AccessRecord> records, std::size_t window = 1000,
                                                     bool overlapping = false) {
  require(window >= 1, "unique_window_series: window must be >= 1");
  std::vector<std::size_t> out;
  if (records.size() < window) return out;
  if (!overlapping) {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(window * 2);
    for (std::size_t start = 0; start + window <= records.size(); start += window) {
      seen.clear();
      for (std::size_t i = start; i < start + window; ++i) seen.insert(unique_key(records[i]));
      out.push_back(seen.size());
    }
    return out;
  }
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ++counts[unique_key(records[i])];
    if (i >= window) {
      auto it = counts.find(unique_key(records[i - window]));
      if (--it->second == 0) counts.erase(it);
    }
    if (i + 1 >= window) out.push_back(counts.size());
  }
  return out;
}

}  // namespace hashfield
