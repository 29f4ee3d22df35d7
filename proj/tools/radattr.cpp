// radattr: command-line front end for the attribution pipeline.
//
// Exit codes: 0 success, 2 invalid input, 3 missing upstream stage output,
// 4 numerical failure, 1 anything else (I/O).

#include "radattr/pipeline.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace radattr;

std::uint64_t parse_seed(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad seed '" + std::string(s) + "'");
  return v;
}

// "1-50", "3", "1,4,9" or combinations such as "1-3,7".
std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string_view part(spec.data() + pos, comma - pos);
    if (part.empty()) throw ValidationError("empty entry in --seeds");
    const std::size_t dash = part.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_seed(part));
    } else {
      const auto lo = parse_seed(part.substr(0, dash));
      const auto hi = parse_seed(part.substr(dash + 1));
      if (hi < lo) throw ValidationError("descending seed range '" + std::string(part) + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    pos = comma + 1;
  }
  return out;
}

struct Args {
  std::string scenario;
  std::string seeds;
  std::string pose_mode = "slam";
  std::string sensor = "lidar";
  std::string out = "out";
  int jobs = 1;
  double far = 1.0 / 600.0;
  bool no_mcmc = false;
  int walkers = 600;
  int iterations = 400;
  int burn_in = 100;
};

pipeline::RunOptions resolve(const Args& a) {
  pipeline::RunOptions o;
  o.scenario_path = a.scenario;
  o.scenario = scene::load_scenario(a.scenario);
  o.seeds = a.seeds.empty() ? o.scenario.seeds : parse_seeds(a.seeds);
  if (o.seeds.empty()) throw ValidationError("no seeds: pass --seeds or list them in the scenario");
  o.pose_mode = parse_pose_mode(a.pose_mode);
  o.sensor = parse_sensor(a.sensor);
  o.out = a.out;
  if (a.jobs < 1) throw ValidationError("--jobs must be at least 1");
  o.jobs = a.jobs;
  if (!(a.far > 0.0)) throw ValidationError("--threshold-far must be positive");
  o.calibration.far = a.far;
  o.windows.mcmc = !a.no_mcmc;
  o.windows.mcmc_config.walkers = a.walkers;
  o.windows.mcmc_config.iterations = a.iterations;
  o.windows.mcmc_config.burn_in = a.burn_in;
  return o;
}

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--scenario", a.scenario, "Scenario YAML file")->required();
  cmd->add_option("--seeds", a.seeds, "Seeds, e.g. 1-50 or 1,2,7 (default: the scenario's list)");
  cmd->add_option("--pose-mode", a.pose_mode, "Platform pose source")->check(CLI::IsMember({"slam", "ins"}));
  cmd->add_option("--sensor", a.sensor, "Object detector")->check(CLI::IsMember({"video", "lidar"}));
  cmd->add_option("--out", a.out, "Output directory (one seed_NNNN directory per seed)");
  cmd->add_option("--jobs", a.jobs, "Seeds processed concurrently");
}

int run(int argc, char** argv) {
  CLI::App app{"Radiation source attribution pipeline"};
  app.require_subcommand(1);
  Args a;

  auto* simulate = app.add_subcommand("simulate", "Synthesize detection, pose and count streams");
  auto* calibrate = app.add_subcommand("calibrate-background", "Background spectra and alarm threshold");
  auto* track = app.add_subcommand("track", "Run the multi-object tracker");
  auto* adjudicate = app.add_subcommand("adjudicate", "Detect alarms and attribute them to tracks");
  auto* optimize = app.add_subcommand("optimize", "Track-informed integration windows");
  auto* report = app.add_subcommand("report", "Export plot data");
  for (auto* cmd : {simulate, calibrate, track, adjudicate, optimize, report}) add_common(cmd, a);
  calibrate->add_option("--threshold-far", a.far, "False alarms per second");
  optimize->add_flag("--no-mcmc", a.no_mcmc, "Skip the position-uncertainty refinement");
  optimize->add_option("--walkers", a.walkers, "Ensemble size");
  optimize->add_option("--iterations", a.iterations, "Ensemble iterations");
  optimize->add_option("--burn-in", a.burn_in, "Iterations discarded before sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const pipeline::RunOptions o = resolve(a);
  const auto& seeds = o.seeds;
  if (*simulate) {
    pipeline::for_each_seed(seeds, o.jobs, [&](std::uint64_t s) { pipeline::simulate_stage(o, s); });
    std::cout << "simulated " << seeds.size() << " seed(s) into " << o.out.string() << '\n';
  } else if (*calibrate) {
    pipeline::calibrate_stage(o);
    std::ifstream in(o.out / pipeline::kBackgroundFile);
    double threshold = 0.0, far = 0.0;
    anomaly::read_background(in, &threshold, &far);
    std::cout << "threshold " << threshold << " at " << far << " false alarms/s\n";
  } else if (*track) {
    pipeline::for_each_seed(seeds, o.jobs, [&](std::uint64_t s) { pipeline::track_stage(o, s); });
    std::cout << "tracked " << seeds.size() << " seed(s)\n";
  } else if (*adjudicate) {
    std::vector<pipeline::SeedOutcome> outcomes(seeds.size());
    std::map<std::uint64_t, std::size_t> where;
    for (std::size_t i = 0; i < seeds.size(); ++i) where[seeds[i]] = i;
    pipeline::for_each_seed(seeds, o.jobs,
                            [&](std::uint64_t s) { outcomes[where.at(s)] = pipeline::adjudicate_stage(o, s); });
    std::cout << pipeline::write_adjudication_summary(o, outcomes) << '\n';
  } else if (*optimize) {
    std::vector<std::vector<pipeline::WindowResult>> results(seeds.size());
    std::map<std::uint64_t, std::size_t> where;
    for (std::size_t i = 0; i < seeds.size(); ++i) where[seeds[i]] = i;
    pipeline::for_each_seed(seeds, o.jobs,
                            [&](std::uint64_t s) { results[where.at(s)] = pipeline::optimize_stage(o, s); });
    std::cout << pipeline::write_window_summary(o, results);
  } else if (*report) {
    pipeline::report_stage(o);
    std::cout << "report written to " << (o.out / "report").string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const radattr::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const radattr::MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const radattr::NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
