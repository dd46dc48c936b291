#pragma once

#include <cstdint>
#include <vector>

#include "hashfield/common.hpp"

namespace hashfield {

enum class Phase : std::uint8_t { Forward = 0, Backward = 1 };
enum class Branch : std::uint8_t { Color = 0, Density = 1 };
enum class AccessKind : std::uint8_t { Read = 0, Write = 1 };

/// One embedding-table access. `vertex` is the cube corner index with bit 0 = x,
/// bit 1 = y, bit 2 = z; the two corners of a group share y and z and differ in x.
struct AccessRecord {
  std::uint32_t iteration = 0;
  Phase phase = Phase::Forward;
  Branch branch = Branch::Density;
  std::uint8_t level = 0;
  std::uint8_t vertex = 0;
  std::uint32_t point_id = 0;
  std::uint32_t address = 0;
  AccessKind kind = AccessKind::Read;

  constexpr std::uint8_t group_id() const { return static_cast<std::uint8_t>(vertex >> 1); }
  constexpr bool x_bit() const { return (vertex & 1u) != 0; }

  friend constexpr bool operator==(const AccessRecord&, const AccessRecord&) = default;
};

/// Destination for access records, in program order.
class TraceSink {
 public:
  virtual ~TraceSink() = default;

  void record(const AccessRecord& r) {
    require(open_, "trace sink is closed");
    append(r);
  }
  void close() {
    if (open_) {
      finish();
      open_ = false;
    }
  }
  bool is_open() const { return open_; }

 protected:
  virtual void append(const AccessRecord& r) = 0;
  virtual void finish() {}

 private:
  bool open_ = true;
};

/// Keeps the whole trace in memory.
class MemoryTraceSink final : public TraceSink {
 public:
  const std::vector<AccessRecord>& records() const { return records_; }
  std::vector<AccessRecord> take() { return std::move(records_); }
  void reserve(std::size_t n) { records_.reserve(n); }

 protected:
  void append(const AccessRecord& r) override { records_.push_back(r); }

 private:
  std::vector<AccessRecord> records_;
};

/// Identifies the emitting query for records produced inside the grid module.
struct TraceTag {
  TraceSink* sink = nullptr;
  std::uint32_t iteration = 0;
  Branch branch = Branch::Density;
  std::uint32_t point_id = 0;
};

}  // namespace hashfield
