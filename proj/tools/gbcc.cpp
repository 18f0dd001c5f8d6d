#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gbcc/checkpoint.hpp"
#include "gbcc/commands.hpp"

namespace {

// Storage for flags shared by train and sweep; applied over the config-file
// values so explicit flags win.
struct ConfigFlags {
  std::string config_file;
  std::uint64_t seed = 0;
  std::int64_t p = 0, d = 0, batch_size = 0, epochs = 0;
  double tau = 0, lambda = 0, con_weight = 0, lr = 0, temperature = 0;
  std::string variant, latent_norm;
  std::vector<std::int64_t> hidden;
  bool no_hidden = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "json file with config defaults");
    app->add_option("--seed", seed, "master rng seed");
    app->add_option("--p", p, "samples per granular ball");
    app->add_option("--tau", tau, "cross-view association threshold in (0,1]");
    app->add_option("--lambda", lambda, "reconstruction loss weight");
    app->add_option("--con-weight", con_weight,
                    "contrastive loss weight (0 trains reconstruction only)");
    app->add_option("--dim", d, "latent dimension");
    app->add_option("--epochs", epochs, "total training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--temperature", temperature, "similarity temperature");
    app->add_option("--variant", variant, "network variant")
        ->check(CLI::IsMember({"mlp", "linear"}));
    app->add_option("--latent-norm", latent_norm, "latent normalization")
        ->check(CLI::IsMember({"zscore", "l2row", "none"}));
    app->add_option("--hidden", hidden, "encoder hidden widths")->delimiter(',');
    app->add_flag("--no-hidden", no_hidden, "single affine encoder (no hidden layers)");
  }

  gbcc::model::TrainConfig build(CLI::App* app) const {
    gbcc::model::TrainConfig cfg;
    if (app->count("--config")) cfg = gbcc::ckpt::load_config_file(config_file);
    if (app->count("--seed")) cfg.seed = seed;
    if (app->count("--p")) cfg.p = p;
    if (app->count("--tau")) cfg.tau = tau;
    if (app->count("--lambda")) cfg.lambda = lambda;
    if (app->count("--con-weight")) cfg.con_weight = con_weight;
    if (app->count("--dim")) cfg.d = d;
    if (app->count("--epochs")) cfg.epochs = epochs;
    if (app->count("--batch-size")) cfg.batch_size = batch_size;
    if (app->count("--lr")) cfg.lr = lr;
    if (app->count("--temperature")) cfg.temperature = temperature;
    if (app->count("--variant"))
      cfg.variant = variant == "linear" ? gbcc::model::NetVariant::linear
                                        : gbcc::model::NetVariant::mlp;
    if (app->count("--latent-norm")) {
      if (latent_norm == "l2row") cfg.latent_norm = gbcc::model::LatentNorm::l2row;
      else if (latent_norm == "none") cfg.latent_norm = gbcc::model::LatentNorm::none;
      else cfg.latent_norm = gbcc::model::LatentNorm::zscore;
    }
    if (app->count("--hidden")) cfg.hidden = hidden;
    if (no_hidden) cfg.hidden.clear();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"granular-ball multi-view contrastive clustering"};
  app.require_subcommand(1);

  // synth
  auto* sc_synth = app.add_subcommand("synth", "generate a labeled multi-view dataset");
  gbcc::cmd::SynthArgs synth_args;
  std::string synth_out;
  std::vector<std::int64_t> synth_dims;
  sc_synth->add_option("--out", synth_out, "output directory")->required();
  sc_synth->add_option("--clusters", synth_args.spec.clusters, "planted cluster count");
  sc_synth->add_option("--per-cluster", synth_args.spec.per_cluster, "samples per cluster");
  sc_synth->add_option("--views", synth_args.spec.views, "view count");
  sc_synth->add_option("--dims", synth_dims, "per-view feature dimensions")->delimiter(',');
  sc_synth->add_option("--sigma", synth_args.spec.sigma,
                       "noise std as a fraction of the mapped center spread");
  sc_synth->add_option("--latent-dim", synth_args.spec.latent_dim, "latent dimension");
  sc_synth->add_option("--seed", synth_args.spec.seed, "rng seed");
  sc_synth->add_option("--name", synth_args.spec.name, "dataset name");

  // train
  auto* sc_train = app.add_subcommand("train", "train and write checkpoint, loss log, metrics");
  ConfigFlags train_flags;
  std::string train_data, train_out, train_resume;
  int train_restarts = 10;
  bool train_quiet = false, train_debug_literal = false;
  sc_train->add_option("--data", train_data, "dataset manifest")->required();
  sc_train->add_option("--out", train_out, "output directory")->required();
  train_flags.attach(sc_train);
  sc_train->add_option("--resume", train_resume,
                       "checkpoint to continue from (--epochs is the total target)");
  sc_train->add_option("--restarts", train_restarts, "k-means restarts for final metrics");
  sc_train->add_flag("--quiet", train_quiet, "suppress per-epoch progress");
  sc_train->add_flag("--debug-literal", train_debug_literal,
                     "also report the un-logged ratio form of the pair objective");

  // evaluate
  auto* sc_eval = app.add_subcommand("evaluate", "cluster a checkpoint's embeddings and score");
  gbcc::cmd::EvaluateArgs eval_args;
  std::string eval_data, eval_ckpt, eval_out;
  sc_eval->add_option("--data", eval_data, "dataset manifest")->required();
  sc_eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  sc_eval->add_option("--out", eval_out, "directory for metrics and predictions");
  sc_eval->add_option("--k", eval_args.k, "cluster count (default: label count)");
  sc_eval->add_option("--restarts", eval_args.restarts, "k-means restarts");

  // sweep
  auto* sc_sweep = app.add_subcommand("sweep", "train and score a (p, d) grid");
  ConfigFlags sweep_flags;
  gbcc::cmd::SweepArgs sweep_args;
  std::string sweep_data, sweep_out;
  sc_sweep->add_option("--data", sweep_data, "dataset manifest")->required();
  sc_sweep->add_option("--out", sweep_out, "output directory")->required();
  sweep_flags.attach(sc_sweep);
  sc_sweep->add_option("--p-grid", sweep_args.p_grid, "granularity grid")->delimiter(',');
  sc_sweep->add_option("--d-grid", sweep_args.d_grid, "latent dimension grid")->delimiter(',');
  sc_sweep->add_option("--restarts", sweep_args.eval_restarts, "k-means restarts per cell");

  // export-embeddings
  auto* sc_export = app.add_subcommand("export-embeddings",
                                       "write per-view and fused latent matrices");
  gbcc::cmd::ExportArgs export_args;
  std::string export_data, export_ckpt, export_out;
  sc_export->add_option("--data", export_data, "dataset manifest")->required();
  sc_export->add_option("--checkpoint", export_ckpt, "checkpoint file")->required();
  sc_export->add_option("--out", export_out, "output directory")->required();
  sc_export->add_flag("--csv", export_args.csv, "also write csv copies");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  return gbcc::cmd::run_guarded([&]() -> int {
    if (sc_synth->parsed()) {
      synth_args.out = synth_out;
      if (sc_synth->count("--dims")) {
        synth_args.spec.dims = synth_dims;
      } else {
        for (std::int64_t v = 0; v < synth_args.spec.views; ++v)
          synth_args.spec.dims.push_back(10 + 2 * v);
      }
      return gbcc::cmd::synth(synth_args);
    }
    if (sc_train->parsed()) {
      gbcc::cmd::TrainArgs args;
      args.data_manifest = train_data;
      args.out = train_out;
      args.cfg = train_flags.build(sc_train);
      args.cfg.debug_literal = train_debug_literal;
      if (sc_train->count("--resume")) args.resume = train_resume;
      args.eval_restarts = train_restarts;
      args.quiet = train_quiet;
      return gbcc::cmd::train(args);
    }
    if (sc_eval->parsed()) {
      eval_args.data_manifest = eval_data;
      eval_args.checkpoint = eval_ckpt;
      if (sc_eval->count("--out")) eval_args.out = eval_out;
      return gbcc::cmd::evaluate(eval_args);
    }
    if (sc_sweep->parsed()) {
      sweep_args.data_manifest = sweep_data;
      sweep_args.out = sweep_out;
      sweep_args.cfg = sweep_flags.build(sc_sweep);
      return gbcc::cmd::sweep(sweep_args);
    }
    if (sc_export->parsed()) {
      export_args.data_manifest = export_data;
      export_args.checkpoint = export_ckpt;
      export_args.out = export_out;
      return gbcc::cmd::export_embeddings(export_args);
    }
    return 2;
  });
}
