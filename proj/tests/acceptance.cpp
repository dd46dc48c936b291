// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "hashfield/hashfield.hpp"
#include "support/gradient_checks.hpp"
#include "support/oracles.hpp"
#include "support/reference.hpp"

using namespace hashfield;
namespace oracle = hashfield::testing;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kEndToEndTol = 1e-3;
constexpr int kGradInstances = 100;
constexpr double kMinBaselinePsnr = 28.0;
constexpr double kMaxParityGapDb = 0.5;
constexpr double kMinIntraFraction = 0.8;
constexpr double kMinFrmReduction = 0.25;
constexpr double kMaxGreedyOverOptimal = 1.2;
constexpr double kMaxBumRatio = 0.35;
constexpr double kMinCombinedReduction = 0.50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// Shared fixtures, built on first use.

const AccessTrace& reference_trace() {
  static const AccessTrace trace = oracle::reference_trace();
  return trace;
}

const SimReport& reference_sim(bool frm, bool bum) {
  static std::map<std::pair<bool, bool>, SimReport> cache;
  auto it = cache.find({frm, bum});
  if (it == cache.end()) {
    SimConfig c;
    c.frm_enabled = frm;
    c.bum_enabled = bum;
    it = cache.emplace(std::pair{frm, bum}, simulate(reference_trace(), c)).first;
  }
  return it->second;
}

const TrainReport& baseline_run() {
  static const TrainReport r = [] {
    const Scene scene = oracle::toy_sphere_scene();
    return Trainer<float>(scene, oracle::baseline_config()).train();
  }();
  return r;
}

// 1 -------------------------------------------------------------------------

std::uint32_t hash_index(std::uint32_t x, std::uint32_t y, std::uint32_t z, std::uint32_t T) {
  HashConfig c;
  c.table_size = T;
  c.levels = 1;
  return hashfield::hash_index({x, y, z}, c);
}

Outcome hash_oracle() {
  const bool pinned = hash_index(0, 0, 0, 1u << 16) == 0 && hash_index(1, 0, 0, 1u << 16) == 1 &&
                      hash_index(0, 1, 0, 1u << 16) == 31153 && hash_index(0, 0, 1, 1u << 16) == 22421;
  std::mt19937_64 rng(1);
  std::uint64_t mismatches = 0;
  for (std::uint32_t T : {1u << 10, 1u << 16}) {
    for (int i = 0; i < 100000; ++i) {
      const auto x = static_cast<std::uint32_t>(rng()), y = static_cast<std::uint32_t>(rng()),
                 z = static_cast<std::uint32_t>(rng());
      mismatches += hash_index(x, y, z, T) != oracle::brute_force_hash(x, y, z, T);
    }
  }
  return {pinned && mismatches == 0,
          "pinned " + std::string(pinned ? "ok" : "wrong") + ", mismatches " + std::to_string(mismatches) + "/200000"};
}

// 2 -------------------------------------------------------------------------

Outcome locality_law() {
  const std::uint32_t T = 1u << 16;
  std::uint64_t checked = 0, violations = 0;
  for (std::uint32_t z = 0; z < 64; ++z)
    for (std::uint32_t y = 0; y < 64; ++y)
      for (std::uint32_t x = 0; x < 64; x += 2) {
        const auto a = static_cast<std::int64_t>(hash_index(x, y, z, T));
        const auto b = static_cast<std::int64_t>(hash_index(x + 1, y, z, T));
        violations += std::abs(b - a) != 1;
        ++checked;
      }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checked) + " pairs"};
}

// 3 -------------------------------------------------------------------------

Outcome gradient_suite() {
  const double interp = oracle::interpolate_fd_worst(kGradInstances, 100);
  const double mlp = oracle::mlp_fd_worst(kGradInstances, 200);
  const double comp = oracle::composite_fd_worst(kGradInstances, 300);
  const double e2e = oracle::end_to_end_fd_worst(kGradInstances, 1);
  const bool pass = interp < kGradTol && mlp < kGradTol && comp < kGradTol && e2e < kEndToEndTol;
  return {pass, "worst rel err interpolate " + fmt(interp, 3) + ", mlp " + fmt(mlp, 3) + ", composite " +
                    fmt(comp, 3) + ", end-to-end " + fmt(e2e, 3)};
}

// 4 -------------------------------------------------------------------------

Outcome training_sanity() {
  const TrainReport& r = baseline_run();
  const double p = r.final_train_psnr();
  return {r.loss.size() == 500 && p >= kMinBaselinePsnr,
          "baseline train PSNR " + fmt(p) + " dB after " + std::to_string(r.loss.size()) + " iterations (>= " +
              fmt(kMinBaselinePsnr) + ")"};
}

// 5 -------------------------------------------------------------------------

Outcome decomposition_parity() {
  const Scene scene = oracle::toy_sphere_scene();
  const TrainReport dec = Trainer<float>(scene, oracle::decomposed_config()).train();
  const TrainReport& base = baseline_run();
  const double gap = std::abs(base.final_train_psnr() - dec.final_train_psnr());
  const bool updates = dec.color_updates * 2 == base.color_updates;
  const bool entries = dec.color_entries * 4 == base.color_entries;
  return {gap <= kMaxParityGapDb && updates && entries,
          "baseline " + fmt(base.final_train_psnr()) + " dB, decomposed " + fmt(dec.final_train_psnr()) +
              " dB, gap " + fmt(gap, 3) + "; color updates " + std::to_string(dec.color_updates) + "/" +
              std::to_string(base.color_updates) + ", color entries " + std::to_string(dec.color_entries) + "/" +
              std::to_string(base.color_entries)};
}

// 6 -------------------------------------------------------------------------

Outcome trace_shape() {
  const AccessTrace& t = reference_trace();
  std::map<std::tuple<std::uint32_t, std::uint32_t, int, int>, std::uint32_t> vertices;
  for (const auto& r : t.records)
    if (r.phase == Phase::Forward && r.kind == AccessKind::Read)
      vertices[{r.iteration, r.point_id, static_cast<int>(r.branch), r.level}] |= 1u << r.vertex;
  std::uint64_t incomplete = 0;
  for (const auto& [k, mask] : vertices) incomplete += mask != 0xFFu;

  const auto fwd = filter_records(t.records, [](const AccessRecord& r) { return r.phase == Phase::Forward; });
  const auto bwd = filter_records(t.records, [](const AccessRecord& r) { return r.phase == Phase::Backward; });
  const auto fs = unique_window_series(fwd), bs = unique_window_series(bwd);
  const bool windows = !fs.empty() && !bs.empty() &&
                       *std::max_element(bs.begin(), bs.end()) < *std::min_element(fs.begin(), fs.end());
  const double intra = intra_group_distances(t.records).fraction_within(5);

  const bool pass = !vertices.empty() && incomplete == 0 && windows && intra >= kMinIntraFraction;
  std::ostringstream d;
  d << t.records.size() << " records; (a) " << vertices.size() << " queries, " << incomplete << " without 8 reads; (b) ";
  if (!fs.empty() && !bs.empty())
    d << "backward max " << *std::max_element(bs.begin(), bs.end()) << " < forward min "
      << *std::min_element(fs.begin(), fs.end());
  d << "; (c) intra |d|<=5 fraction " << fmt(intra);
  return {pass, d.str()};
}

// 7 -------------------------------------------------------------------------

bool valid_schedule(const IssueSchedule& s, std::span<const MemRequest> reqs, const SramBankModel& m) {
  std::vector<int> issued(reqs.size(), 0);
  for (const auto& cycle : s.cycles) {
    std::map<std::uint32_t, std::uint32_t> open;
    for (std::uint32_t id : cycle) {
      if (id >= reqs.size()) return false;
      ++issued[id];
      const BankSlot b = map_bank(reqs[id].address, m);
      auto [it, fresh] = open.try_emplace(b.bank, b.row);
      if (it->second != b.row) return false;
    }
  }
  return std::all_of(issued.begin(), issued.end(), [](int n) { return n == 1; });
}

Outcome frm_properties() {
  bool safe = true, dominated = true;
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t T = trial % 2 ? 1u << 10 : 1u << 16;
    const SramBankModel m{trial % 3 == 0 ? 16u : 8u, 1u + static_cast<std::uint32_t>(trial % 8), T};
    const auto reqs = oracle::random_point_requests(rng, 125, T);
    const auto frm = frm_schedule(reqs, {}, m);
    const auto naive = naive_schedule(reqs, m);
    safe = safe && valid_schedule(frm, reqs, m) && valid_schedule(naive, reqs, m);
    dominated = dominated && frm.cycle_count() <= naive.cycle_count();
  }
  // the reference trace's density reads, one chunk per point
  const AccessTrace& t = reference_trace();
  std::vector<MemRequest> reqs;
  for (const auto& r : t.records)
    if (r.phase == Phase::Forward && r.branch == Branch::Density) reqs.push_back({r.address, r.point_id});
  const SramBankModel m{8, 2, t.header.density_table_size};
  const auto frm = frm_schedule(reqs, {}, m);
  const auto naive = naive_schedule(reqs, m);
  safe = safe && valid_schedule(frm, reqs, m) && valid_schedule(naive, reqs, m);
  dominated = dominated && frm.cycle_count() <= naive.cycle_count();

  const auto on = reference_sim(true, true).grid_read_cycles(), off = reference_sim(false, true).grid_read_cycles();
  dominated = dominated && on <= off;
  const double reduction = 1.0 - static_cast<double>(on) / static_cast<double>(off);

  std::mt19937_64 wrng(77);
  const SramBankModel wm{8, 2, 1u << 16};
  double worst = 0.0;
  for (int w = 0; w < 1000; ++w) {
    const std::size_t n = 1 + uniform_index(wrng, 12);
    const std::uint32_t range = w % 2 ? 64 : 256;
    std::vector<std::uint32_t> a(n);
    std::vector<BankSlot> slots;
    for (auto& x : a) {
      x = static_cast<std::uint32_t>(uniform_index(wrng, range));
      slots.push_back(map_bank(x, wm));
    }
    const auto greedy = frm_schedule(std::span<const std::uint32_t>(a), FrmConfig{16}, wm).cycle_count();
    worst = std::max(worst, static_cast<double>(greedy) / static_cast<double>(oracle::optimal_cycles(slots)));
  }
  const bool pass = safe && dominated && reduction >= kMinFrmReduction && worst <= kMaxGreedyOverOptimal;
  return {pass, std::string("conflict-free and exactly-once ") + (safe ? "yes" : "no") + ", never worse " +
                    (dominated ? "yes" : "no") + ", read cycles " + std::to_string(on) + " vs " + std::to_string(off) +
                    " (reduction " + fmt(reduction, 3) + "), worst greedy/optimal " + fmt(worst, 3)};
}

// 8 -------------------------------------------------------------------------

Outcome bum_properties() {
  bool conserved = true, fewer = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto stream = oracle::local_repeat_stream(5000, 1 + seed % 6, 30 + 10 * (seed % 5), 1u << 8, seed);
    for (std::uint32_t intake : {1u, 4u, 16u}) {
      const auto r = bum_process(stream, {16, 8 + static_cast<std::uint32_t>(seed), intake, false});
      std::map<std::uint32_t, double> direct, merged;
      for (const auto& w : stream) direct[w.address] += w.value;
      for (const auto& w : r.writes) merged[w.address] += w.value;
      std::vector<double> a(1u << 8, 0.5), b(1u << 8, 0.5);
      for (const auto& w : stream) a[w.address] -= w.value;
      for (const auto& w : r.writes) b[w.address] -= w.value;
      conserved = conserved && direct == merged && a == b;
      fewer = fewer && r.writes.size() <= stream.size();
    }
  }
  const auto stream = oracle::local_repeat_stream(100000, 5, 100, 1u << 16, 7);
  const auto r = bum_process(stream, {});
  const double ratio = static_cast<double>(r.writes.size()) / static_cast<double>(r.inputs);

  const SimRow& grid = reference_sim(true, true).row("grid", "all");
  fewer = fewer && grid.writes_merged <= grid.writes_naive;
  const auto both = reference_sim(true, true).grid_cycles(), none = reference_sim(false, false).grid_cycles();
  const double combined = 1.0 - static_cast<double>(both) / static_cast<double>(none);

  const bool pass = conserved && fewer && ratio <= kMaxBumRatio && combined >= kMinCombinedReduction;
  return {pass, std::string("conservation and replay ") + (conserved ? "exact" : "broken") + ", writes <= naive " +
                    (fewer ? "yes" : "no") + ", synthetic ratio " + fmt(ratio) + ", reference writes " +
                    std::to_string(grid.writes_merged) + "/" + std::to_string(grid.writes_naive) +
                    ", grid cycles " + std::to_string(both) + " vs " + std::to_string(none) + " (reduction " +
                    fmt(combined, 3) + ")"};
}

// 9 -------------------------------------------------------------------------

Outcome fusion_selection() {
  const bool thresholds = select_fusion(256 * 1024).level == FusionLevel::Level0 &&
                          select_fusion(512 * 1024).level == FusionLevel::Level1 &&
                          select_fusion(1024 * 1024).level == FusionLevel::Level2;
  const bool tables = select_fusion(table_bytes(1u << 16, 2)).level == FusionLevel::Level0 &&
                      select_fusion(table_bytes(1u << 18, 2)).level == FusionLevel::Level2;
  // The reference trace is the pinned high-locality trace: most intra-group pairs are adjacent entries.
  auto util = [](FusionLevel l) {
    SimConfig c;
    c.force_fusion = l;
    return simulate(reference_trace(), c).row("forward", "grid_density").bank_util;
  };
  const double u0 = util(FusionLevel::Level0), u2 = util(FusionLevel::Level2);
  return {thresholds && tables && u2 >= u0,
          std::string("thresholds ") + (thresholds ? "ok" : "wrong") + ", color/density tables " +
              (tables ? "Level0/Level2" : "wrong") + ", forward bank util Level2 " + fmt(u2, 3) + " vs Level0 " +
              fmt(u0, 3)};
}

// 10 ------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::string run_config(const std::string& mode, const fs::path& trace_out) {
  std::ostringstream c;
  c << "[run]\nseed = 5\n\n[scene]\nsource = toy:sphere\nviews = 4\ntest_views = 1\nimage_size = 16\n\n"
    << "[train]\nmode = " << mode << "\ndensity_table = 1024\ncolor_table = " << (mode == "baseline" ? 1024 : 256)
    << "\nlevels = 2\nbase_resolution = 8\niterations = 4\nbatch_size = 64\nsamples_per_ray = 8\n"
    << "hidden_width = 16\nhidden_layers = 1\neval_every = 2\n\n[trace]\nout = " << trace_out.string() << "\n";
  return c.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("hashfield_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = HASHFIELD_CLI;
  std::vector<std::string> differing;
  int failures = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    fs::create_directories(dir);
    write_text(dir / "baseline.ini", run_config("baseline", dir / "baseline.i3dt"));
    write_text(dir / "decomposed.ini", run_config("decomposed", dir / "decomposed.i3dt"));
    const std::string d = dir.string();
    const std::vector<std::string> cmds = {
        cli + " train --config " + d + "/decomposed.ini --out " + d + "/train",
        cli + " trace --config " + d + "/decomposed.ini --out " + d + "/trace.i3dt",
        cli + " analyze --trace " + d + "/trace.i3dt --report intra --out " + d + "/intra.csv",
        cli + " analyze --trace " + d + "/trace.i3dt --report inter --out " + d + "/inter.csv",
        cli + " analyze --trace " + d + "/trace.i3dt --report window --window 100 --out " + d + "/window.csv",
        cli + " simulate --trace " + d + "/trace.i3dt --report " + d + "/sim.csv",
        cli + " compare --baseline " + d + "/baseline.ini --decomposed " + d + "/decomposed.ini --out " + d +
            "/compare.csv",
    };
    for (const auto& cmd : cmds) failures += std::system((cmd + " > /dev/null 2>&1").c_str()) != 0;
  }
  const std::vector<std::string> outputs = {"train/train.csv", "trace.i3dt", "intra.csv", "inter.csv",
                                            "window.csv",      "sim.csv",    "compare.csv"};
  for (const auto& o : outputs) {
    const std::string a = slurp(root / "run0" / o), b = slurp(root / "run1" / o);
    if (a.empty() || a != b) differing.push_back(o);
  }
  fs::remove_all(root);
  std::string detail = std::to_string(outputs.size()) + " outputs from 5 subcommands compared";
  if (failures) detail += ", " + std::to_string(failures) + " commands failed";
  for (const auto& o : differing) detail += ", differs or empty: " + o;
  return {failures == 0 && differing.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"hash oracle", hash_oracle},
      {"locality law", locality_law},
      {"gradient suite", gradient_suite},
      {"training sanity", training_sanity},
      {"decomposition parity", decomposition_parity},
      {"trace shape", trace_shape},
      {"FRM properties", frm_properties},
      {"BUM properties", bum_properties},
      {"fusion selection", fusion_selection},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail << " ["
              << fmt(secs, 3) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
