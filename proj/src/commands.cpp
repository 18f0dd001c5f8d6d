#include "gbcc/commands.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "gbcc/checkpoint.hpp"
#include "gbcc/errors.hpp"
#include "gbcc/eval.hpp"
#include "gbcc/rng.hpp"

namespace gbcc::cmd {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kStreamEval = 0xE7;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct EvalOutcome {
  eval::Metrics metrics;
  std::vector<std::int64_t> pred;
  std::int64_t k = 0;
  bool scored = false;
};

EvalOutcome score(const model::Trainer& trainer, const data::MultiViewDataset& ds,
                  std::int64_t k_requested, int restarts) {
  EvalOutcome out;
  auto hs = trainer.embeddings();
  Matrix z = eval::fuse(hs);
  out.k = k_requested > 0 ? k_requested : ds.truth_clusters();
  if (out.k < 1)
    throw config_error("cluster count unknown: dataset has no labels, pass --k");
  Rng rng = Rng::derive(trainer.config().seed, {kStreamEval});
  out.pred = eval::cluster(z, out.k, rng, restarts);
  if (ds.labels) {
    out.metrics = eval::evaluate(out.pred, *ds.labels);
    out.scored = true;
  }
  return out;
}

json metrics_json(const EvalOutcome& out, const model::TrainConfig& cfg,
                  std::int64_t epochs_done) {
  json j;
  if (out.scored) {
    j["acc"] = out.metrics.acc;
    j["nmi"] = out.metrics.nmi;
    j["pur"] = out.metrics.pur;
  }
  j["k"] = out.k;
  j["p"] = cfg.p;
  j["tau"] = cfg.tau;
  j["lambda"] = cfg.lambda;
  j["d"] = cfg.d;
  j["seed"] = cfg.seed;
  j["epochs"] = epochs_done;
  return j;
}

void write_metrics_files(const std::filesystem::path& dir, const json& j) {
  {
    std::ofstream out(dir / "metrics.json");
    if (!out) throw data_error("cannot write " + (dir / "metrics.json").string());
    out << j.dump(2) << "\n";
  }
  std::ofstream out(dir / "metrics.txt");
  if (!out) throw data_error("cannot write " + (dir / "metrics.txt").string());
  for (const auto& [key, value] : j.items()) {
    out << key << " ";
    if (value.is_number_float())
      out << fmt(value.get<double>());
    else
      out << value.dump();
    out << "\n";
  }
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<std::int64_t>& pred) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  for (auto l : pred) out << l << "\n";
}

unsigned worker_count(std::size_t cells) {
  unsigned limit = std::thread::hardware_concurrency();
  if (limit == 0) limit = 1;
  if (const char* env = std::getenv("GBCC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw config_error("GBCC_THREADS must be a positive integer");
    limit = static_cast<unsigned>(std::min<long>(v, 256));
  }
  return static_cast<unsigned>(std::min<std::size_t>(limit, cells));
}

}  // namespace

int synth(const SynthArgs& args) {
  auto ds = data::synth(args.spec);
  auto manifest = data::save_dataset(args.out, ds.name, ds.views,
                                     ds.labels ? &*ds.labels : nullptr);
  std::cout << "wrote " << manifest.string() << ": " << ds.samples() << " samples, "
            << ds.views.size() << " views, " << ds.truth_clusters() << " clusters\n";
  return 0;
}

int train(const TrainArgs& args) {
  auto ds = data::load_dataset(args.data_manifest);
  model::TrainConfig cfg = args.cfg;
  std::optional<model::Trainer> trainer;
  if (args.resume) {
    auto ck = ckpt::load(*args.resume);
    ck.cfg.epochs = args.cfg.epochs;  // total target, checkpointed epochs included
    ck.cfg.debug_literal = args.cfg.debug_literal;
    cfg = ck.cfg;
    trainer = ckpt::restore(ck, ds.views);
  } else {
    trainer.emplace(ds.views, cfg);
  }

  std::filesystem::create_directories(args.out);
  const auto loss_path = args.out / "loss.csv";
  std::ofstream loss(loss_path);
  if (!loss) throw data_error("cannot write " + loss_path.string());
  loss << "epoch,l_con,l_rec,l_total\n";
  while (trainer->epochs_done() < cfg.epochs) {
    const auto s = trainer->train_epoch();
    loss << s.epoch << "," << fmt(s.mean_con) << "," << fmt(s.mean_rec) << ","
         << fmt(s.mean_total) << "\n";
    if (!args.quiet) {
      std::cerr << "epoch " << s.epoch << "/" << cfg.epochs << " l_con=" << s.mean_con
                << " l_rec=" << s.mean_rec << " l_total=" << s.mean_total;
      if (cfg.debug_literal) std::cerr << " literal_ratio=" << s.literal_ratio;
      std::cerr << "\n";
    }
  }
  loss.close();
  if (!loss) throw data_error("write failed: " + loss_path.string());

  ckpt::save(args.out / "checkpoint.gbck", *trainer);

  if (ds.labels) {
    const auto out = score(*trainer, ds, 0, args.eval_restarts);
    const json j = metrics_json(out, cfg, trainer->epochs_done());
    write_metrics_files(args.out, j);
    write_predictions(args.out / "predictions.txt", out.pred);
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "trained " << trainer->epochs_done()
              << " epochs (no labels, metrics skipped)\n";
  }
  return 0;
}

int evaluate(const EvaluateArgs& args) {
  auto ds = data::load_dataset(args.data_manifest);
  auto ck = ckpt::load(args.checkpoint);
  auto trainer = ckpt::restore(ck, ds.views);
  const auto out = score(trainer, ds, args.k, args.restarts);
  const json j = metrics_json(out, trainer.config(), trainer.epochs_done());
  if (args.out) {
    std::filesystem::create_directories(*args.out);
    write_metrics_files(*args.out, j);
    write_predictions(*args.out / "predictions.txt", out.pred);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int sweep(const SweepArgs& args) {
  auto ds = data::load_dataset(args.data_manifest);
  if (!ds.labels) throw data_error("sweep needs labels to score its cells");
  if (args.p_grid.empty() || args.d_grid.empty())
    throw config_error("sweep grids must be non-empty");
  for (auto p : args.p_grid)
    if (p < 1) throw config_error("p grid values must be >= 1");
  for (auto d : args.d_grid)
    if (d < 1) throw config_error("d grid values must be >= 1");

  struct Cell {
    std::int64_t p = 0, d = 0;
    eval::Metrics m;
  };
  std::vector<Cell> cells;
  for (auto p : args.p_grid)
    for (auto d : args.d_grid) cells.push_back({p, d, {}});

  std::vector<std::exception_ptr> failures(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
      try {
        model::TrainConfig cfg = args.cfg;
        cfg.p = cells[i].p;
        cfg.d = cells[i].d;
        // Per-cell seed from (master seed, p, d): parallel and serial runs
        // produce identical tables.
        cfg.seed = Rng::derive(args.cfg.seed,
                               {static_cast<std::uint64_t>(cells[i].p),
                                static_cast<std::uint64_t>(cells[i].d)})
                       .next_u64();
        model::Trainer tr(ds.views, cfg);
        while (tr.epochs_done() < cfg.epochs) tr.train_epoch();
        cells[i].m = score(tr, ds, 0, args.eval_restarts).metrics;
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned workers = worker_count(cells.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  std::filesystem::create_directories(args.out);
  const auto csv_path = args.out / "sweep.csv";
  std::ofstream out(csv_path);
  if (!out) throw data_error("cannot write " + csv_path.string());
  out << "p,d,acc,nmi,pur\n";
  for (const auto& c : cells) {
    const std::string row = std::to_string(c.p) + "," + std::to_string(c.d) + "," +
                            fmt(c.m.acc) + "," + fmt(c.m.nmi) + "," + fmt(c.m.pur);
    out << row << "\n";
    std::cout << row << "\n";
  }
  out.close();
  if (!out) throw data_error("write failed: " + csv_path.string());
  return 0;
}

int export_embeddings(const ExportArgs& args) {
  auto ds = data::load_dataset(args.data_manifest);
  auto ck = ckpt::load(args.checkpoint);
  auto trainer = ckpt::restore(ck, ds.views);
  auto hs = trainer.embeddings();
  Matrix z = eval::fuse(hs);
  std::filesystem::create_directories(args.out);
  for (std::size_t v = 0; v < hs.size(); ++v) {
    const std::string stem = "h_" + ds.view_names[v];
    data::save_matrix(args.out / (stem + ".gbmv"), hs[v]);
    if (args.csv) data::save_csv(args.out / (stem + ".csv"), hs[v]);
  }
  data::save_matrix(args.out / "fused.gbmv", z);
  if (args.csv) data::save_csv(args.out / "fused.csv", z);
  std::cout << "wrote " << hs.size() + 1 << " matrices to " << args.out.string() << "\n";
  return 0;
}

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gbcc::cmd
