// Command-line entry point: one subcommand per pipeline stage.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/common/errors.hpp"
#include "tracseg/influence/gradient_cache.hpp"
#include "tracseg/pipeline/pipeline.hpp"
#include "tracseg/service/api.hpp"
#include "tracseg/version.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kPrerequisite = 3, kIntegrity = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace tracseg;
  pipeline::RunConfig config;
  std::string grad_scope = "all";
  std::string checkpoint_epochs;
  std::string log_level = "info";
  std::string brats_source;
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  bool no_seal = false, no_augment = false;

  CLI::App app{"Region-level training-data attribution for segmentation networks"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--out", config.out, "Bundle directory")->capture_default_str();
  app.add_option("--data", config.data, "Dataset directory to copy into the bundle (train, run)");
  app.add_option("--seed", config.seed, "Seed for data, initialization and shuffling")->capture_default_str();
  app.add_option("--epochs", config.schedule.total_epochs, "Total training epochs")->capture_default_str();
  app.add_option("--sgd-switch-epoch", config.schedule.sgd_switch_epoch, "Last Adam epoch")->capture_default_str();
  app.add_option("--checkpoint-epochs", checkpoint_epochs, "Influence checkpoints, e.g. 6-10 or 6,8,10");
  app.add_option("--adam-lr", config.schedule.adam_lr, "Adam learning rate")->capture_default_str();
  app.add_option("--sgd-lr", config.schedule.sgd_lr, "SGD learning rate")->capture_default_str();
  app.add_option("--batch", config.schedule.batch_size, "Batch size")->capture_default_str();
  app.add_flag("--no-augment", no_augment, "Disable mirroring and cropping");
  app.add_option("--depth", config.model.depth, "UNet depth")->capture_default_str();
  app.add_option("--width", config.model.base_width, "UNet base width (= last hidden layer features)")
      ->capture_default_str();
  app.add_option("--threshold", config.threshold, "Region probability threshold")->capture_default_str();
  app.add_option("--global-k", config.global_k, "Top-k used to find global explainers")->capture_default_str();
  app.add_option("--global-freq", config.global_freq, "Frequency threshold for global explainers")
      ->capture_default_str();
  app.add_option("--top", config.top, "Proponents per region in reports")->capture_default_str();
  app.add_option("--grad-scope", grad_scope, "Gradient scope: all or last-layer")->capture_default_str();
  app.add_option("--workers", config.workers, "Parallel gradient workers")->capture_default_str();
  app.add_option("--port", port, "Service port")->capture_default_str();
  app.add_option("--host", host, "Service address")->capture_default_str();
  app.add_option("--static", static_dir, "Explorer build directory served at /");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();
  app.add_option("--patients", config.synth.n_patients, "Synthetic patients")->capture_default_str();
  app.add_option("--slices", config.synth.slices_per_patient, "Synthetic slices per patient")->capture_default_str();
  app.add_option("--image-size", config.synth.image_size, "Synthetic image size")->capture_default_str();
  app.add_option("--noise", config.synth.noise_level, "Synthetic noise level")->capture_default_str();
  app.add_option("--crop", config.ingest.crop_size, "BraTS in-plane crop")->capture_default_str();
  app.add_option("--slice-axis", config.ingest.slice_axis, "BraTS slicing axis")->capture_default_str();
  app.add_flag("--no-seal", no_seal, "Leave the bundle unsealed after faithfulness");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus into <out>/dataset");
  auto* ingest = app.add_subcommand("ingest", "Read a BraTS-layout directory into <out>/dataset");
  ingest->add_option("source", brats_source, "BraTS root (one directory per patient)")->required();
  auto* train = app.add_subcommand("train", "Train the UNet and save every epoch");
  auto* eval = app.add_subcommand("eval", "Evaluate the final model and store predictions");
  auto* influence = app.add_subcommand("influence", "Build the gradient cache and explanation vectors");
  auto* self = app.add_subcommand("self-influence", "Train-influence matrices and self-influence");
  auto* faith = app.add_subcommand("faithfulness", "Feature-importance curves and impacts; seals the bundle");
  auto* report = app.add_subcommand("report", "Export plots and tables to <out>/reports");
  auto* serve = app.add_subcommand("serve", "Serve a sealed bundle over HTTP");
  auto* run = app.add_subcommand("run", "All stages from synth to faithfulness");
  auto* seal = app.add_subcommand("seal", "Seal a complete bundle");
  auto* verify = app.add_subcommand("verify", "Check a sealed bundle against its manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    config.apply_seed();
    config.model.seed = config.seed;
    config.schedule.augment = !no_augment;
    config.seal = !no_seal;
    config.grad_scope = influence::grad_scope_from_string(grad_scope);
    if (!checkpoint_epochs.empty()) config.schedule.checkpoint_epochs = segnet::parse_epoch_list(checkpoint_epochs);
    if (config.workers < 1) throw ConfigError("--workers must be at least 1");
    if (!(config.threshold > 0 && config.threshold < 1)) throw ConfigError("--threshold must lie in (0, 1)");

    if (*synth) pipeline::run_synth(config);
    if (*ingest) pipeline::run_ingest(config, brats_source);
    if (*train) pipeline::run_train(config);
    if (*eval) pipeline::run_eval(config);
    if (*influence) pipeline::run_influence(config);
    if (*self) pipeline::run_self_influence(config);
    if (*faith) pipeline::run_faithfulness(config);
    if (*report) pipeline::run_report(config);
    if (*run) pipeline::run_all(config);
    if (*seal) artifacts::seal_bundle(config.out);
    if (*verify) {
      const auto bundle = artifacts::Bundle::open(config.out);
      std::cout << "bundle " << config.out.string() << " verified, etag " << bundle.etag() << "\n";
    }
    if (*serve) {
      service::ServeOptions options;
      options.host = host;
      options.port = port;
      options.static_dir = static_dir;
      const service::ApiService api(artifacts::Bundle::open(config.out));
      service::serve(api, options);
    }
    return kOk;
  } catch (const PrerequisiteError& e) {
    spdlog::error("{} (run 'tracseg {}' first)", e.what(), e.required_command());
    return kPrerequisite;
  } catch (const IntegrityError& e) {
    spdlog::error("integrity error: {}", e.what());
    return kIntegrity;
  } catch (const CorruptFileError& e) {
    spdlog::error("integrity error: {}", e.what());
    return kIntegrity;
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const UnsupportedFormatError& e) {
    spdlog::error("unsupported format: {}", e.what());
    return kConfig;
  } catch (const IngestionError& e) {
    spdlog::error("ingestion failed: {}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
}
