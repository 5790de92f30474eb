// versetopics: run the topic pipeline stage by stage from a config file.
//
// Exit codes: 0 success, 2 input error, 3 empty result, 4 numerical failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "versetopics/pipeline.hpp"

namespace vt = versetopics;

namespace {

constexpr int kInputError = 2;
constexpr int kEmptyResult = 3;
constexpr int kNumerical = 4;

struct Options {
  std::string config;
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
};

vt::PipelineConfig resolve(const std::string& command, const Options& opt) {
  auto cfg = vt::load_pipeline_config(std::filesystem::path{opt.config});
  if (opt.output) cfg.output = *opt.output;
  if (opt.jobs) cfg.jobs = std::max(1u, *opt.jobs);
  if (opt.seed) {
    // the override targets the stage's own random stream
    if (command == "fit") cfg.base_seed = *opt.seed;
    else if (command == "synth") cfg.synth.seed = *opt.seed;
    else if (command == "probe") cfg.splsda.cv_seed = *opt.seed;
    else spdlog::warn("--seed has no effect on '{}'", command);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("versetopics");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"Consensus topic modelling, sparse PLS-DA probing and narrative hub analysis"};
  app.require_subcommand(1);
  Options opt;

  const std::map<std::string, std::pair<std::string, std::function<void(const vt::PipelineConfig&)>>> commands{
      {"ingest", {"tagged tokens to a block document-term matrix", [](const auto& c) { vt::cmd_ingest(c); }}},
      {"segment", {"tagged tokens to the block segmentation", [](const auto& c) { vt::cmd_segment(c); }}},
      {"fit", {"multi-seed Gibbs LDA ensemble", [](const auto& c) { vt::cmd_fit(c); }}},
      {"consensus", {"align runs, gate them and average gamma", [](const auto& c) { vt::cmd_consensus(c); }}},
      {"probe", {"one-vs-rest sPLS-DA probe and exclusivity lexicon", [](const auto& c) { vt::cmd_probe(c); }}},
      {"hubs", {"hub mixtures, lexical profiles and cards", [](const auto& c) { vt::cmd_hubs(c); }}},
      {"report", {"plot-ready tables for the figures", [](const auto& c) { vt::cmd_report(c); }}},
      {"synth", {"synthetic corpus from known LDA parameters", [](const auto& c) { vt::cmd_synth(c); }}},
      {"score", {"recovery of the synthetic ground truth", [](const auto& c) { vt::cmd_score(c); }}},
  };

  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opt.config, "pipeline config file")->required();
    sub->add_option("--jobs", opt.jobs, "worker threads for the chain ensemble");
    sub->add_option("--seed", opt.seed, "override the stage seed (fit, synth, probe)");
    sub->add_option("--output", opt.output, "output directory (overrides paths.output)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  const auto* chosen = app.get_subcommands().front();
  const auto name = chosen->get_name();
  try {
    commands.at(name).second(resolve(name, opt));
  } catch (const vt::InputError& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const vt::EmptyResultError& e) {
    spdlog::error("{}", e.what());
    return kEmptyResult;
  } catch (const vt::NumericalError& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("malformed JSON input: {}", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
