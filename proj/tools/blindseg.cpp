// blindseg: blind phoneme segmentation from sequence-model prediction error.
//
// Pipeline stages are subcommands sharing one declarative config:
//   synth -> prepare -> train -> segment -> evaluate / sweep

#include <CLI11.hpp>

#include <blindseg/config.hpp>
#include <blindseg/pipeline.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

blindseg::PipelineConfig resolve_config(const std::string& config_file,
                                        const std::vector<std::string>& overrides) {
  blindseg::PipelineConfig cfg;
  if (!config_file.empty()) cfg = blindseg::load_config(config_file);
  for (const auto& assignment : overrides) blindseg::apply_override(cfg, assignment);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blind phoneme segmentation via prediction-error peaks"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_file, "Config file (INI sections, key = value)");
  app.add_option("-s,--set", overrides, "Override, e.g. --set model.type=rnn-cat");

  auto* cmd_config = app.add_subcommand("config", "Show the resolved configuration");
  bool dump = false;
  cmd_config->add_flag("--dump", dump, "Print every key with its current value");

  auto* cmd_prepare = app.add_subcommand("prepare", "Extract features, fit codebook, quantize");
  auto* cmd_train = app.add_subcommand("train", "Fit the configured prediction model");
  auto* cmd_segment = app.add_subcommand("segment", "Emit boundary files for the test split");
  bool dump_errors = false;
  double delta_override = -1.0;
  cmd_segment->add_flag("--dump-errors", dump_errors, "Also write per-frame error CSVs");
  cmd_segment->add_option("--delta", delta_override, "Peak threshold (overrides config)");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Score boundaries against gold annotation");
  auto* cmd_sweep = app.add_subcommand("sweep", "Evaluate across the configured delta list");
  auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  std::string synth_out;
  cmd_synth->add_option("--out", synth_out, "Output corpus directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    blindseg::PipelineConfig cfg = resolve_config(config_file, overrides);

    if (cmd_config->parsed()) {
      (void)dump;  // config prints the full resolved set either way
      std::cout << blindseg::dump_config(cfg);
      return 0;
    }
    if (cmd_synth->parsed()) {
      blindseg::cmd_synth(cfg, synth_out, std::cout);
      return 0;
    }

    blindseg::PipelineContext ctx = blindseg::open_pipeline(cfg);
    if (cmd_prepare->parsed()) {
      blindseg::cmd_prepare(ctx, std::cout);
    } else if (cmd_train->parsed()) {
      blindseg::cmd_train(ctx, std::cout);
    } else if (cmd_segment->parsed()) {
      if (delta_override >= 0.0) ctx.cfg.delta = delta_override;
      blindseg::cmd_segment(ctx, std::cout, dump_errors);
    } else if (cmd_evaluate->parsed()) {
      blindseg::cmd_evaluate(ctx, std::cout);
    } else if (cmd_sweep->parsed()) {
      blindseg::cmd_sweep(ctx, std::cout);
    }
    return 0;
  } catch (const blindseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const blindseg::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const blindseg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
