#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hashfield/hashfield.hpp"

namespace fs = std::filesystem;
using namespace hashfield;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> iterations;
  std::optional<std::string> scene;
  std::optional<std::string> out_dir;
};

RunConfig load_config(const std::string& path, const Overrides& o) {
  RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
  }
  if (o.iterations) c.train.iterations = *o.iterations;
  if (o.scene) c.scene.source = *o.scene;
  if (o.out_dir) c.report_dir = *o.out_dir;
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
  if (!out) throw LoadError("failed writing " + path.string());
}

Scene scene_for(const RunConfig& c) {
  return resolve_scene(c.scene.source, c.scene.views, c.scene.image_size, c.seed, c.scene.test_views);
}

void print_warnings(const RunConfig& c) {
  for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_train(const std::string& config_path, const Overrides& o, const std::string& checkpoint) {
  RunConfig c = load_config(config_path, o);
  validate_for_training(c);
  print_warnings(c);
  const Scene scene = scene_for(c);
  Trainer<float> trainer(scene, c.train);
  const TrainReport report = trainer.train();

  std::ostringstream csv, summary;
  report.write_csv(csv);
  report.write_summary(summary);
  const fs::path dir(c.report_dir);
  write_file(dir / "train.csv", csv.str());
  write_file(dir / "summary.txt", summary.str());
  if (!checkpoint.empty()) save_checkpoint(checkpoint, trainer.field());
  std::cout << summary.str();
  return kExitOk;
}

int cmd_trace(const std::string& config_path, const Overrides& o, std::string out) {
  RunConfig c = load_config(config_path, o);
  if (out.empty()) out = c.trace_out;
  if (out.empty()) throw ConfigError("trace output path missing: pass --out or set trace.out");
  validate_for_training(c);
  print_warnings(c);
  const Scene scene = scene_for(c);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  TraceFileWriter writer(out, trace_header_for(c.train));
  Trainer<float> trainer(scene, c.train);
  trainer.train(&writer);
  writer.close();
  std::cout << "records: " << writer.count() << "\n";
  return kExitOk;
}

std::vector<AccessRecord> select_records(const AccessTrace& t, const std::string& phase, const std::string& branch) {
  return filter_records(t.records, [&](const AccessRecord& r) {
    const bool phase_ok = phase == "all" || (phase == "forward") == (r.phase == Phase::Forward);
    const bool branch_ok = branch == "all" || (branch == "density") == (r.branch == Branch::Density);
    return phase_ok && branch_ok;
  });
}

int cmd_analyze(const std::string& trace_path, const std::string& report, std::size_t window, bool overlapping,
                const std::string& phase, const std::string& branch, const std::string& out) {
  const AccessTrace trace = read_trace(trace_path);
  const std::vector<AccessRecord> recs = select_records(trace, phase, branch);
  std::ostringstream csv;
  if (report == "intra") {
    const IntraGroupReport r = intra_group_distances(recs);
    csv << "delta,count\n";
    for (const auto& [d, n] : r.histogram) csv << d << ',' << n << '\n';
    std::cerr << "pairs: " << r.pairs << "  fraction |delta|<=5: " << r.fraction_within(5) << "\n";
  } else if (report == "inter") {
    const InterGroupReport r = inter_group_distances(recs);
    csv << "pairs,mean,median\n" << r.pairs << ',' << TrainReport::format_double(r.mean) << ','
        << TrainReport::format_double(r.median) << '\n';
  } else {
    if (window == 0) throw ConfigError("--window must be >= 1");
    const auto series = unique_window_series(recs, window, overlapping);
    csv << "window,unique\n";
    for (std::size_t i = 0; i < series.size(); ++i) csv << i << ',' << series[i] << '\n';
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_file(out, csv.str());
  }
  return kExitOk;
}

int cmd_simulate(const std::string& trace_path, const std::string& config_path, const std::string& report_path,
                 bool no_frm, bool no_bum) {
  RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (no_frm) c.sim.frm_enabled = false;
  if (no_bum) c.sim.bum_enabled = false;
  validate_for_simulation(c);
  const AccessTrace trace = read_trace(trace_path);
  const SimReport rep = simulate(trace, c.sim);
  std::ostringstream csv;
  rep.write_csv(csv);
  if (report_path.empty()) {
    std::cout << csv.str();
  } else {
    write_file(report_path, csv.str());
    std::cout << "total_cycles: " << rep.total_cycles() << "\ngrid_cycles: " << rep.grid_cycles() << "\n";
  }
  return kExitOk;
}

struct CompareRow {
  std::string name;
  RunConfig config;
  TrainReport report;
  std::optional<SimReport> sim;
};

CompareRow run_for_compare(const std::string& name, const std::string& path, const Overrides& o) {
  CompareRow row{name, load_config(path, o), {}, std::nullopt};
  validate_for_training(row.config);
  print_warnings(row.config);
  const Scene scene = scene_for(row.config);
  Trainer<float> trainer(scene, row.config.train);
  if (row.config.trace_out.empty()) {
    row.report = trainer.train();
    return row;
  }
  MemoryTraceSink sink;
  row.report = trainer.train(&sink);
  AccessTrace trace{trace_header_for(row.config.train), sink.take()};
  write_trace(row.config.trace_out, trace);
  row.sim = simulate(trace, row.config.sim);
  return row;
}

int cmd_compare(const std::string& baseline, const std::string& decomposed, const Overrides& o, const std::string& out) {
  {
    const RunConfig a = load_config(baseline, o), b = load_config(decomposed, o);
    if (a.scene.source != b.scene.source || a.scene.views != b.scene.views || a.scene.image_size != b.scene.image_size ||
        a.scene.test_views != b.scene.test_views || a.seed != b.seed)
      throw ConfigError("compare: the two configs describe different scenes");
  }
  const CompareRow rows[2] = {run_for_compare("baseline", baseline, o), run_for_compare("decomposed", decomposed, o)};
  std::ostringstream csv;
  csv << "config,density_table,color_table,density_freq,color_freq,final_loss,train_psnr,test_psnr,"
         "density_updates,color_updates,color_entries,grid_cycles,total_cycles\n";
  for (const auto& r : rows) {
    const TrainConfig& t = r.config.train;
    csv << r.name << ',' << t.density_table.table_size << ',' << t.color_table.table_size << ','
        << (t.mode == TrainConfig::Mode::Baseline ? "1/1" : t.density_freq.str()) << ','
        << (t.mode == TrainConfig::Mode::Baseline ? "1/1" : t.color_freq.str()) << ','
        << TrainReport::format_double(r.report.loss.empty() ? 0.0 : r.report.loss.back()) << ','
        << TrainReport::format_double(r.report.final_train_psnr()) << ','
        << (r.report.test_psnr.empty() ? std::string() : TrainReport::format_double(r.report.test_psnr.back().second))
        << ',' << r.report.density_updates << ',' << r.report.color_updates << ',' << r.report.color_entries << ','
        << (r.sim ? std::to_string(r.sim->grid_cycles()) : std::string()) << ','
        << (r.sim ? std::to_string(r.sim->total_cycles()) : std::string()) << '\n';
  }
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_file(out, csv.str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decomposed hash-grid radiance field trainer, trace analyzer and accelerator model"};
  app.require_subcommand(1);

  Overrides o;
  auto add_overrides = [&o](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Global seed (overrides run.seed)");
    sub->add_option("--iterations", o.iterations, "Override train.iterations");
    sub->add_option("--scene", o.scene, "Override scene.source (toy:<preset> or a manifest path)");
  };

  std::string config, out, checkpoint, trace, report = "window", phase = "all", branch = "all", baseline, decomposed;
  std::size_t window = 1000;
  bool overlapping = false, no_frm = false, no_bum = false;

  auto* train = app.add_subcommand("train", "Train a field and write train.csv + summary.txt");
  train->add_option("--config", config, "Run config file")->check(CLI::ExistingFile);
  train->add_option("--out", o.out_dir, "Report directory (overrides report.dir)");
  train->add_option("--checkpoint", checkpoint, "Write the trained field to this checkpoint file");
  add_overrides(train);

  auto* tr = app.add_subcommand("trace", "Train while recording every embedding-table access");
  tr->add_option("--config", config, "Run config file")->check(CLI::ExistingFile);
  tr->add_option("--out", out, "Trace file to write (overrides trace.out)");
  add_overrides(tr);

  auto* an = app.add_subcommand("analyze", "Address-pattern analysis of a trace");
  an->add_option("--trace", trace, "Trace file")->required();
  an->add_option("--report", report, "intra, inter or window")->check(CLI::IsMember({"intra", "inter", "window"}));
  an->add_option("--window", window, "Window length for the window report");
  an->add_flag("--overlapping", overlapping, "Slide windows by one record instead of by the window length");
  an->add_option("--phase", phase, "forward, backward or all")->check(CLI::IsMember({"forward", "backward", "all"}));
  an->add_option("--branch", branch, "density, color or all")->check(CLI::IsMember({"density", "color", "all"}));
  an->add_option("--out", out, "CSV output (default stdout)");

  auto* sim = app.add_subcommand("simulate", "Replay a trace through the accelerator model");
  sim->add_option("--trace", trace, "Trace file")->required();
  sim->add_option("--config", config, "Config file with a [sim] section")->check(CLI::ExistingFile);
  sim->add_option("--report", out, "SimReport CSV output (default stdout)");
  sim->add_flag("--no-frm", no_frm, "Issue reads point by point");
  sim->add_flag("--no-bum", no_bum, "Write every gradient update directly");

  auto* cmp = app.add_subcommand("compare", "Train a baseline and a decomposed config side by side");
  cmp->add_option("--baseline", baseline, "Baseline run config")->required()->check(CLI::ExistingFile);
  cmp->add_option("--decomposed", decomposed, "Decomposed run config")->required()->check(CLI::ExistingFile);
  cmp->add_option("--out", out, "CSV output (default stdout)");
  add_overrides(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(config, o, checkpoint);
    if (*tr) return cmd_trace(config, o, out);
    if (*an) return cmd_analyze(trace, report, window, overlapping, phase, branch, out);
    if (*sim) return cmd_simulate(trace, config, out, no_frm, no_bum);
    if (*cmp) return cmd_compare(baseline, decomposed, o, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
