#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "hashfield/access.hpp"
#include "hashfield/common.hpp"
#include "hashfield/trace.hpp"

namespace hashfield {

// ---------------------------------------------------------------------------
// Banked SRAM

struct SramBankModel {
  std::uint32_t bank_count = 8;
  std::uint32_t row_width = 2;  ///< consecutive entries per bank row
  std::uint32_t table_size = 1u << 16;

  void validate() const {
    require(bank_count >= 1, "SramBankModel: bank_count must be positive");
    require(row_width >= 1, "SramBankModel: row_width must be positive");
    require(table_size >= 1, "SramBankModel: table_size must be positive");
  }
};

struct BankSlot {
  std::uint32_t bank = 0;
  std::uint32_t row = 0;
  friend bool operator==(const BankSlot&, const BankSlot&) = default;
};

/// Row-interleaved mapping: row = addr / row_width, bank = row mod bank_count.
inline BankSlot map_bank(std::uint32_t address, const SramBankModel& m) {
  if (address >= m.table_size)
    throw ContractError("map_bank: address " + std::to_string(address) + " outside table of " +
                        std::to_string(m.table_size));
  const std::uint32_t row = address / m.row_width;
  return {row % m.bank_count, row};
}

// ---------------------------------------------------------------------------
// Request scheduling

/// One memory request; `chunk` groups requests that belong to one point query.
struct MemRequest {
  std::uint32_t address = 0;
  std::uint64_t chunk = 0;
};

/// Cycle-by-cycle bank arbiter. Each cycle it scans the oldest `window` pending requests in order; the first
/// request to a bank opens its row and every later request to that same row issues with it.
/// With `chunk_barrier` only the oldest chunk is eligible, which is the naive per-point issue policy.
class BankScheduler {
 public:
  BankScheduler(const SramBankModel& model, std::uint32_t window, bool chunk_barrier = false)
      : model_(model), window_(window), barrier_(chunk_barrier), claim_(model.bank_count) {
    model.validate();
    require(window >= 1, "BankScheduler: window must be positive");
  }

  void push(const MemRequest& r, std::uint64_t id) {
    const BankSlot s = map_bank(r.address, model_);
    queue_.push_back({id, r.chunk, s.bank, s.row});
  }
  bool empty() const { return queue_.empty(); }
  std::size_t pending() const { return queue_.size(); }

  /// Advances one cycle. Issued request ids are appended to `issued`; returns physical bank accesses.
  std::uint32_t step(std::vector<std::uint64_t>* issued = nullptr) {
    std::fill(claim_.begin(), claim_.end(), kFree);
    const std::size_t n = std::min<std::size_t>(window_, queue_.size());
    const std::uint64_t head_chunk = queue_.empty() ? 0 : queue_.front().chunk;
    std::uint32_t physical = 0;
    keep_.clear();
    std::size_t scanned = 0;
    for (; scanned < n; ++scanned) {
      const Pending& p = queue_[scanned];
      if (barrier_ && p.chunk != head_chunk) break;
      bool issue = false;
      if (claim_[p.bank] == kFree) {
        claim_[p.bank] = p.row;
        ++physical;
        issue = true;
      } else if (claim_[p.bank] == p.row) {
        issue = true;
      }
      if (issue) {
        if (issued != nullptr) issued->push_back(p.id);
      } else {
        keep_.push_back(p);
      }
    }
    queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(scanned));
    queue_.insert(queue_.begin(), keep_.begin(), keep_.end());
    return physical;
  }

 private:
  static constexpr std::int64_t kFree = -1;
  struct Pending {
    std::uint64_t id;
    std::uint64_t chunk;
    std::uint32_t bank;
    std::uint32_t row;
  };
  SramBankModel model_;
  std::uint32_t window_;
  bool barrier_;
  std::deque<Pending> queue_;
  std::vector<std::int64_t> claim_;
  std::vector<Pending> keep_;
};

struct FrmConfig {
  std::uint32_t window = 16;
};

struct IssueSchedule {
  std::vector<std::vector<std::uint32_t>> cycles;  ///< request indices issued per cycle
  std::uint64_t physical_accesses = 0;
  std::uint64_t cycle_count() const { return cycles.size(); }
};

namespace detail {

inline IssueSchedule run_schedule(std::span<const MemRequest> requests, const SramBankModel& model, std::uint32_t window,
                                  bool barrier) {
  BankScheduler s(model, window, barrier);
  for (std::size_t i = 0; i < requests.size(); ++i) s.push(requests[i], i);
  IssueSchedule out;
  std::vector<std::uint64_t> issued;
  while (!s.empty()) {
    issued.clear();
    out.physical_accesses += s.step(&issued);
    out.cycles.emplace_back(issued.begin(), issued.end());
  }
  return out;
}

}  // namespace detail

/// Greedy oldest-first packing of reads into conflict-free cycles within the FRM window.
inline IssueSchedule frm_schedule(std::span<const MemRequest> requests, const FrmConfig& frm, const SramBankModel& model) {
  return detail::run_schedule(requests, model, frm.window, false);
}

inline IssueSchedule frm_schedule(std::span<const std::uint32_t> addresses, const FrmConfig& frm,
                                  const SramBankModel& model) {
  std::vector<MemRequest> reqs(addresses.size());
  for (std::size_t i = 0; i < addresses.size(); ++i) reqs[i] = {addresses[i], i};
  return frm_schedule(reqs, frm, model);
}

/// Naive issue: each chunk (one point's reads) runs alone, no packing across chunks.
inline IssueSchedule naive_schedule(std::span<const MemRequest> requests, const SramBankModel& model) {
  return detail::run_schedule(requests, model, std::max<std::uint32_t>(1, static_cast<std::uint32_t>(requests.size())),
                              true);
}

// ---------------------------------------------------------------------------
// BUM

struct BumConfig {
  std::uint32_t capacity = 16;
  std::uint32_t evict_after = 64;  ///< idle cycles before an entry is written back
  std::uint32_t intake = 1;        ///< updates accepted per cycle
  bool half_precision = false;     ///< round write-back values to binary16

  void validate() const {
    require(capacity >= 1, "BumConfig: capacity must be positive");
    require(evict_after >= 1, "BumConfig: evict_after must be positive");
    require(intake >= 1, "BumConfig: intake must be positive");
  }
};

struct WriteOp {
  std::uint32_t address = 0;
  double value = 0.0;
  friend bool operator==(const WriteOp&, const WriteOp&) = default;
};

inline double round_half(double v) { return static_cast<double>(static_cast<float>(Eigen::half(static_cast<float>(v)))); }

/// Content-addressed merge buffer. Entries keep insertion order; a full buffer evicts its oldest entry.
class BumUnit {
 public:
  explicit BumUnit(const BumConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    entries_.reserve(cfg.capacity);
  }

  /// Offers one update; evictions are appended to `out`.
  void accept(std::uint32_t address, double value, std::vector<WriteOp>& out) {
    if (!std::isfinite(value)) throw ContractError("bum: non-finite update for address " + std::to_string(address));
    ++inputs_;
    for (auto& e : entries_) {
      if (e.address == address) {
        e.value += value;
        e.idle = 0;
        return;
      }
    }
    if (entries_.size() == cfg_.capacity) {
      emit(entries_.front(), out);
      entries_.erase(entries_.begin());
    }
    entries_.push_back({address, value, 0});
  }

  /// End of cycle: ages entries and writes back those idle for evict_after cycles.
  void tick(std::vector<WriteOp>& out) {
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (++it->idle >= cfg_.evict_after) {
        emit(*it, out);
        it = entries_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void flush(std::vector<WriteOp>& out) {
    for (const auto& e : entries_) emit(e, out);
    entries_.clear();
  }

  std::size_t occupancy() const { return entries_.size(); }
  std::uint64_t inputs() const { return inputs_; }
  std::uint64_t writes() const { return writes_; }
  const BumConfig& config() const { return cfg_; }

 private:
  struct Entry {
    std::uint32_t address;
    double value;
    std::uint32_t idle;
  };
  void emit(const Entry& e, std::vector<WriteOp>& out) {
    out.push_back({e.address, cfg_.half_precision ? round_half(e.value) : e.value});
    ++writes_;
  }
  BumConfig cfg_;
  std::vector<Entry> entries_;
  std::uint64_t inputs_ = 0;
  std::uint64_t writes_ = 0;
};

struct BumResult {
  std::vector<WriteOp> writes;
  std::uint64_t inputs = 0;
  std::uint64_t merged = 0;  ///< inputs absorbed into an existing entry
  std::uint64_t cycles = 0;
};

/// Runs a whole stream through one BUM at cfg.intake updates per cycle and flushes at the end.
inline BumResult bum_process(std::span<const WriteOp> stream, const BumConfig& cfg) {
  BumUnit bum(cfg);
  BumResult r;
  std::size_t next = 0;
  while (next < stream.size()) {
    for (std::uint32_t k = 0; k < cfg.intake && next < stream.size(); ++k, ++next)
      bum.accept(stream[next].address, stream[next].value, r.writes);
    bum.tick(r.writes);
    ++r.cycles;
  }
  bum.flush(r.writes);
  r.inputs = stream.size();
  r.merged = r.inputs - r.writes.size();
  return r;
}

// ---------------------------------------------------------------------------
// Fusion

enum class FusionLevel { Level0 = 0, Level1 = 1, Level2 = 2 };

struct FusionConfig {
  FusionLevel level = FusionLevel::Level0;
  std::uint32_t cores_per_group = 1;  ///< grid cores fused together
  std::uint32_t groups = 4;           ///< independent core groups
  std::uint32_t banks = 8;            ///< banks per group
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

inline constexpr std::uint32_t kGridCores = 4;
inline constexpr std::uint32_t kBanksPerCore = 8;
inline constexpr std::uint64_t kCoreTableBytes = 256 * 1024;

inline FusionConfig fusion_config(FusionLevel level) {
  const std::uint32_t fused = 1u << static_cast<std::uint32_t>(level);
  return {level, fused, kGridCores / fused, kBanksPerCore * fused};
}

inline FusionConfig select_fusion(std::uint64_t table_bytes) {
  require(table_bytes > 0, "select_fusion: table size must be positive");
  if (table_bytes <= kCoreTableBytes) return fusion_config(FusionLevel::Level0);
  if (table_bytes <= 2 * kCoreTableBytes) return fusion_config(FusionLevel::Level1);
  if (table_bytes <= 4 * kCoreTableBytes) return fusion_config(FusionLevel::Level2);
  throw DomainError("select_fusion: unsupported table size " + std::to_string(table_bytes) + " bytes (max 1 MB)");
}

/// Half-precision storage footprint.
constexpr std::uint64_t table_bytes(std::uint64_t entries, std::uint64_t features) { return entries * features * 2; }

inline const char* fusion_name(FusionLevel l) {
  switch (l) {
    case FusionLevel::Level0: return "Level0";
    case FusionLevel::Level1: return "Level1";
    case FusionLevel::Level2: return "Level2";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// MLP units

enum class MlpUnitType { Systolic, AdderTree };

struct MlpHardware {
  std::uint32_t systolic_dim = 16;  ///< A
  std::uint32_t adder_width = 64;   ///< P
};

constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

inline MlpUnitType mlp_unit_for(std::uint64_t out_channels) {
  return out_channels > 3 ? MlpUnitType::Systolic : MlpUnitType::AdderTree;
}

/// Cycles for an (M x K) * (K x N) product.
inline std::uint64_t mlp_cycle_model(std::uint64_t M, std::uint64_t K, std::uint64_t N, MlpUnitType unit,
                                     const MlpHardware& hw = {}) {
  require(M > 0 && K > 0 && N > 0, "mlp_cycle_model: dimensions must be positive");
  require(hw.systolic_dim > 0 && hw.adder_width > 0, "mlp_cycle_model: unit size must be positive");
  if (unit == MlpUnitType::Systolic) {
    const std::uint64_t A = hw.systolic_dim;
    return ceil_div(M, A) * ceil_div(N, A) * (2 * A + K - 2);
  }
  const std::uint64_t P = hw.adder_width;
  const std::uint64_t depth = static_cast<std::uint64_t>(std::bit_width(P - 1)) + 1;  // ceil(log2 P) + 1
  return M * N * ceil_div(K, P) * depth;
}

inline std::uint64_t mlp_cycle_model(std::uint64_t M, std::uint64_t K, std::uint64_t N, const MlpHardware& hw = {}) {
  return mlp_cycle_model(M, K, N, mlp_unit_for(N), hw);
}

// ---------------------------------------------------------------------------
// Whole-trace simulation

struct SimConfig {
  std::uint32_t row_width = 2;
  std::uint32_t frm_window = 16;  ///< per grid core; fused groups scale it with their bank count
  bool frm_enabled = true;
  bool bum_enabled = true;
  std::uint32_t bum_capacity = 16;
  std::uint32_t bum_evict_after = 64;
  std::uint32_t bum_intake = 16;
  bool half_precision = false;
  std::optional<FusionLevel> force_fusion;
  std::uint32_t pipeline_depth = 16;
  MlpHardware mlp;
  std::uint32_t mlp_hidden_width = 64;
  std::uint32_t mlp_hidden_layers = 2;
  std::uint32_t direction_dim = 27;
  double clock_ghz = 0.8;
  double dram_gbps = 59.7;
  std::uint64_t host_cycles_per_iteration = 0;

  void validate() const {
    require(row_width >= 1 && frm_window >= 1, "SimConfig: row_width and frm_window must be positive");
    require(pipeline_depth >= 1, "SimConfig: pipeline_depth must be positive");
    require(clock_ghz > 0 && dram_gbps > 0, "SimConfig: clock and bandwidth must be positive");
    require(mlp_hidden_width >= 1 && mlp_hidden_layers >= 1, "SimConfig: MLP shape must be positive");
    BumConfig{bum_capacity, bum_evict_after, bum_intake, half_precision}.validate();
  }
};

struct SimRow {
  std::string phase;
  std::string unit;
  std::uint64_t cycles = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes_naive = 0;
  std::uint64_t writes_merged = 0;
  double bank_util = 0.0;
  friend bool operator==(const SimRow&, const SimRow&) = default;
};

struct SimReport {
  std::vector<SimRow> rows;
  FusionConfig density_fusion;
  FusionConfig color_fusion;

  const SimRow& row(std::string_view phase, std::string_view unit) const {
    for (const auto& r : rows)
      if (r.phase == phase && r.unit == unit) return r;
    throw ContractError("SimReport: no row " + std::string(phase) + "/" + std::string(unit));
  }
  std::uint64_t cycles(std::string_view phase, std::string_view unit) const { return row(phase, unit).cycles; }
  std::uint64_t total_cycles() const { return cycles("total", "all"); }
  std::uint64_t grid_cycles() const { return cycles("grid", "all"); }
  std::uint64_t grid_read_cycles() const {
    return cycles("forward", "grid_density") + cycles("forward", "grid_color");
  }
  double seconds(double clock_ghz) const { return static_cast<double>(total_cycles()) / (clock_ghz * 1e9); }

  void write_csv(std::ostream& os) const {
    os << "phase,unit,cycles,reads,writes_naive,writes_merged,bank_util\n";
    for (const auto& r : rows) {
      os << r.phase << ',' << r.unit << ',' << r.cycles << ',' << r.reads << ',' << r.writes_naive << ','
         << r.writes_merged << ',' << std::fixed << std::setprecision(6) << r.bank_util << '\n';
      os.unsetf(std::ios::floatfield);
    }
  }
};

namespace detail {

struct GridResult {
  std::uint64_t cycles = 0;
  std::uint64_t reads = 0;
  std::uint64_t writes_naive = 0;
  std::uint64_t writes_merged = 0;
  std::uint64_t physical = 0;
  std::uint64_t bank_cycles = 0;
};

constexpr std::uint64_t chunk_key(const AccessRecord& r) {
  return (std::uint64_t{r.iteration} << 40) ^ (std::uint64_t{r.point_id} << 8) ^ r.level;
}
constexpr std::uint64_t point_key(const AccessRecord& r) {
  return (std::uint64_t{r.iteration} << 32) | r.point_id;
}

/// Splits records into `parts` contiguous runs whose boundaries fall between points.
inline std::vector<std::span<const AccessRecord>> split_by_point(std::span<const AccessRecord> recs, std::uint32_t parts) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (i == 0 || point_key(recs[i]) != point_key(recs[i - 1])) starts.push_back(i);
  std::vector<std::span<const AccessRecord>> out;
  const std::size_t points = starts.size();
  for (std::uint32_t g = 0; g < parts; ++g) {
    const std::size_t a = points * g / parts, b = points * (g + 1) / parts;
    if (a == b) continue;
    const std::size_t lo = starts[a], hi = b < points ? starts[b] : recs.size();
    out.push_back(recs.subspan(lo, hi - lo));
  }
  return out;
}

inline GridResult simulate_reads(std::span<const AccessRecord> recs, const SramBankModel& model, std::uint32_t window,
                                 bool frm) {
  BankScheduler s(model, window, !frm);
  for (std::size_t i = 0; i < recs.size(); ++i) s.push({recs[i].address, chunk_key(recs[i])}, i);
  GridResult g;
  while (!s.empty()) {
    g.physical += s.step();
    ++g.cycles;
  }
  g.reads = recs.size();
  return g;
}

inline GridResult simulate_writes(std::span<const AccessRecord> recs, const SramBankModel& model, std::uint32_t window,
                                  bool frm, std::optional<BumConfig> bum_cfg) {
  GridResult g;
  g.writes_naive = recs.size();
  BankScheduler s(model, window, !frm);
  std::uint64_t next_id = 0;
  if (!bum_cfg) {
    for (const auto& r : recs) s.push({r.address, chunk_key(r)}, next_id++);
    while (!s.empty()) {
      g.physical += s.step();
      ++g.cycles;
    }
    g.writes_merged = recs.size();
    return g;
  }
  BumUnit bum(*bum_cfg);
  std::vector<WriteOp> evicted;
  std::size_t next = 0;
  bool flushed = false;
  while (true) {
    evicted.clear();
    if (next < recs.size()) {
      for (std::uint32_t k = 0; k < bum_cfg->intake && next < recs.size(); ++k, ++next)
        bum.accept(recs[next].address, 1.0, evicted);
      bum.tick(evicted);
    } else if (!flushed) {
      bum.flush(evicted);
      flushed = true;
    }
    // Writes leaving the buffer in the same cycle form one naive chunk.
    for (const auto& w : evicted) s.push({w.address, g.cycles}, next_id++);
    if (flushed && s.empty()) break;
    if (!s.empty()) g.physical += s.step();
    ++g.cycles;
  }
  g.writes_merged = bum.writes();
  return g;
}

}  // namespace detail

/// Replays a trace through the accelerator model.
inline SimReport simulate(const AccessTrace& trace, const SimConfig& cfg) {
  cfg.validate();
  const TraceHeader& h = trace.header;
  require(h.features_per_entry >= 1, "simulate: trace header has zero features per entry");

  SimReport rep;
  std::uint64_t phase_grid[2] = {0, 0};
  std::uint64_t grid_total = 0;
  std::uint64_t grid_reads = 0, grid_wn = 0, grid_wm = 0, grid_phys = 0, grid_bank_cycles = 0;
  std::vector<SimRow> grid_rows;

  for (Phase phase : {Phase::Forward, Phase::Backward}) {
    for (Branch branch : {Branch::Density, Branch::Color}) {
      const std::uint32_t T = h.table_size(branch);
      std::vector<AccessRecord> recs;
      for (const auto& r : trace.records) {
        if (r.phase != phase || r.branch != branch) continue;
        if (r.address >= T)
          throw ContractError("simulate: trace address " + std::to_string(r.address) + " exceeds table size " +
                              std::to_string(T));
        if (r.level >= h.levels(branch)) throw ContractError("simulate: trace level exceeds header level count");
        recs.push_back(r);
        recs.back().address += r.level * T;  // levels are stacked in one SRAM table
      }
      FusionConfig fusion = T == 0 ? fusion_config(FusionLevel::Level0)
                                   : select_fusion(table_bytes(T, h.features_per_entry) * h.levels(branch));
      if (branch == Branch::Density) rep.density_fusion = fusion;
      if (branch == Branch::Color) rep.color_fusion = fusion;
      if (cfg.force_fusion) fusion = fusion_config(*cfg.force_fusion);
      if (branch == Branch::Density && cfg.force_fusion) rep.density_fusion = fusion;
      if (branch == Branch::Color && cfg.force_fusion) rep.color_fusion = fusion;

      const SramBankModel model{fusion.banks, cfg.row_width, std::max<std::uint32_t>(T * h.levels(branch), 1)};
      const std::uint32_t window = cfg.frm_window * fusion.cores_per_group;
      std::optional<BumConfig> bum;
      if (cfg.bum_enabled)
        bum = BumConfig{cfg.bum_capacity, cfg.bum_evict_after, cfg.bum_intake * fusion.cores_per_group,
                        cfg.half_precision};

      detail::GridResult total;
      for (auto seg : detail::split_by_point(recs, fusion.groups)) {
        const detail::GridResult g = phase == Phase::Forward
                                         ? detail::simulate_reads(seg, model, window, cfg.frm_enabled)
                                         : detail::simulate_writes(seg, model, window, cfg.frm_enabled, bum);
        total.cycles = std::max(total.cycles, g.cycles);
        total.reads += g.reads;
        total.writes_naive += g.writes_naive;
        total.writes_merged += g.writes_merged;
        total.physical += g.physical;
      }
      total.bank_cycles = total.cycles * std::uint64_t{fusion.groups} * fusion.banks;
      SimRow row{phase == Phase::Forward ? "forward" : "backward",
                 branch == Branch::Density ? "grid_density" : "grid_color",
                 total.cycles,
                 total.reads,
                 total.writes_naive,
                 total.writes_merged,
                 total.bank_cycles ? static_cast<double>(total.physical) / static_cast<double>(total.bank_cycles) : 0.0};
      grid_rows.push_back(row);
      phase_grid[phase == Phase::Forward ? 0 : 1] += total.cycles;
      grid_total += total.cycles;
      grid_reads += total.reads;
      grid_wn += total.writes_naive;
      grid_wm += total.writes_merged;
      grid_phys += total.physical;
      grid_bank_cycles += total.bank_cycles;
    }
  }

  // Points and iterations present in the trace drive the MLP and DRAM models.
  std::set<std::uint32_t> iterations;
  std::unordered_map<std::uint32_t, std::uint64_t> points_per_iter;
  {
    std::vector<std::uint64_t> seen;
    for (const auto& r : trace.records) {
      iterations.insert(r.iteration);
      if (r.phase == Phase::Forward) seen.push_back(detail::point_key(r));
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (auto k : seen) ++points_per_iter[static_cast<std::uint32_t>(k >> 32)];
  }
  const std::uint64_t in_dim = std::uint64_t{h.density_levels + h.color_levels} * h.features_per_entry + cfg.direction_dim;
  std::uint64_t mlp_fwd = 0;
  std::uint64_t points_total = 0;
  for (const auto& [it, pts] : points_per_iter) {
    points_total += pts;
    std::uint64_t k = in_dim;
    for (std::uint32_t l = 0; l < cfg.mlp_hidden_layers; ++l) {
      mlp_fwd += mlp_cycle_model(pts, k, cfg.mlp_hidden_width, cfg.mlp);
      k = cfg.mlp_hidden_width;
    }
    mlp_fwd += mlp_cycle_model(pts, k, 1, cfg.mlp);  // density head
    mlp_fwd += mlp_cycle_model(pts, k, 3, cfg.mlp);  // color head
  }
  const std::uint64_t mlp_bwd = 2 * mlp_fwd;

  const double bytes_per_cycle = cfg.dram_gbps / cfg.clock_ghz;
  auto dram_cycles = [&](std::uint64_t bytes) {
    return static_cast<std::uint64_t>(std::ceil(static_cast<double>(bytes) / bytes_per_cycle));
  };
  // Half-precision position + direction in, four outputs back; backward streams four output gradients.
  const std::uint64_t dram_fwd = dram_cycles(points_total * (6 + 4) * 2);
  const std::uint64_t dram_bwd = dram_cycles(points_total * 4 * 2);

  std::uint64_t total = 0;
  for (int p = 0; p < 2; ++p) {
    const char* name = p == 0 ? "forward" : "backward";
    const std::uint64_t mlp = p == 0 ? mlp_fwd : mlp_bwd;
    const std::uint64_t dram = p == 0 ? dram_fwd : dram_bwd;
    const std::uint64_t compute = std::max(phase_grid[p], mlp);
    const std::uint64_t stall = dram > compute ? dram - compute : 0;
    rep.rows.push_back(grid_rows[2 * p]);
    rep.rows.push_back(grid_rows[2 * p + 1]);
    rep.rows.push_back({name, "mlp", mlp, 0, 0, 0, 0.0});
    rep.rows.push_back({name, "dram_stall", stall, 0, 0, 0, 0.0});
    rep.rows.push_back({name, "all", compute + stall, 0, 0, 0, 0.0});
    total += compute + stall;
  }
  const std::uint64_t pipeline = 2 * std::uint64_t{cfg.pipeline_depth};
  const std::uint64_t host = cfg.host_cycles_per_iteration * iterations.size();
  total += pipeline + host;
  rep.rows.push_back({"all", "pipeline", pipeline, 0, 0, 0, 0.0});
  rep.rows.push_back({"all", "host", host, 0, 0, 0, 0.0});
  rep.rows.push_back({"grid", "all", grid_total, grid_reads, grid_wn, grid_wm,
                      grid_bank_cycles ? static_cast<double>(grid_phys) / static_cast<double>(grid_bank_cycles) : 0.0});
  rep.rows.push_back({"total", "all", total, grid_reads, grid_wn, grid_wm, 0.0});
  return rep;
}

}  // namespace hashfield
