#include "gbcc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gbcc/errors.hpp"

namespace gbcc::ckpt {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'G', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::string variant_name(model::NetVariant v) {
  return v == model::NetVariant::mlp ? "mlp" : "linear";
}

model::NetVariant variant_from(const std::string& s) {
  if (s == "mlp") return model::NetVariant::mlp;
  if (s == "linear") return model::NetVariant::linear;
  throw config_error("unknown network variant '" + s + "' (expected mlp or linear)");
}

std::string norm_name(model::LatentNorm n) {
  switch (n) {
    case model::LatentNorm::zscore: return "zscore";
    case model::LatentNorm::l2row: return "l2row";
    case model::LatentNorm::none: return "none";
  }
  return "zscore";
}

model::LatentNorm norm_from(const std::string& s) {
  if (s == "zscore") return model::LatentNorm::zscore;
  if (s == "l2row") return model::LatentNorm::l2row;
  if (s == "none") return model::LatentNorm::none;
  throw config_error("unknown latent norm '" + s + "' (expected zscore, l2row or none)");
}

json config_json(const model::TrainConfig& cfg) {
  json j;
  j["p"] = cfg.p;
  j["tau"] = cfg.tau;
  j["lambda"] = cfg.lambda;
  j["con_weight"] = cfg.con_weight;
  j["d"] = cfg.d;
  j["temperature"] = cfg.temperature;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["lr"] = cfg.lr;
  j["variant"] = variant_name(cfg.variant);
  j["latent_norm"] = norm_name(cfg.latent_norm);
  j["hidden"] = cfg.hidden;
  j["debug_literal"] = cfg.debug_literal;
  return j;
}

model::TrainConfig config_from(const json& j) {
  model::TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "p") cfg.p = value.get<std::int64_t>();
    else if (key == "tau") cfg.tau = value.get<double>();
    else if (key == "lambda") cfg.lambda = value.get<double>();
    else if (key == "con_weight") cfg.con_weight = value.get<double>();
    else if (key == "d") cfg.d = value.get<std::int64_t>();
    else if (key == "temperature") cfg.temperature = value.get<double>();
    else if (key == "batch_size") cfg.batch_size = value.get<std::int64_t>();
    else if (key == "epochs") cfg.epochs = value.get<std::int64_t>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "lr") cfg.lr = value.get<double>();
    else if (key == "variant") cfg.variant = variant_from(value.get<std::string>());
    else if (key == "latent_norm") cfg.latent_norm = norm_from(value.get<std::string>());
    else if (key == "hidden") cfg.hidden = value.get<std::vector<std::int64_t>>();
    else if (key == "debug_literal") cfg.debug_literal = value.get<bool>();
    else throw config_error("unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n, const std::filesystem::path& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw data_error("truncated checkpoint: " + path.string());
}

void write_matrix(std::ofstream& out, const Matrix& m) {
  const auto rows = static_cast<std::uint64_t>(m.rows);
  const auto cols = static_cast<std::uint64_t>(m.cols);
  write_bytes(out, &rows, 8);
  write_bytes(out, &cols, 8);
  write_bytes(out, m.data.data(), m.data.size() * sizeof(double));
}

Matrix read_matrix(std::ifstream& in, const std::filesystem::path& path) {
  std::uint64_t rows = 0, cols = 0;
  read_bytes(in, &rows, 8, path);
  read_bytes(in, &cols, 8, path);
  if (rows == 0 || cols == 0 || rows > (1ull << 32) || cols > (1ull << 32))
    throw data_error("implausible matrix shape in checkpoint " + path.string());
  Matrix m = Matrix::zeros(static_cast<std::int64_t>(rows), static_cast<std::int64_t>(cols));
  read_bytes(in, m.data.data(), m.data.size() * sizeof(double), path);
  return m;
}

}  // namespace

std::string config_to_json(const model::TrainConfig& cfg) {
  return config_json(cfg).dump(2);
}

model::TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config is not valid json: ") + e.what());
  }
  if (!j.is_object()) throw config_error("config must be a json object");
  return config_from(j);
}

model::TrainConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save(const std::filesystem::path& path, model::Trainer& trainer) {
  auto named = trainer.named_parameters();
  auto& opt = trainer.optimizer();

  json header;
  header["config"] = config_json(trainer.config());
  header["view_dims"] = trainer.view_dims();
  header["epoch"] = trainer.epochs_done();
  header["adam_step"] = opt.step_count();
  json names = json::array();
  for (const auto& [name, node] : named) names.push_back(name);
  header["params"] = std::move(names);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path.string());
  write_bytes(out, kMagic, 4);
  write_bytes(out, &kVersion, 4);
  const auto len = static_cast<std::uint64_t>(text.size());
  write_bytes(out, &len, 8);
  write_bytes(out, text.data(), text.size());
  for (const auto& [name, node] : named) write_matrix(out, node->value);
  if (opt.step_count() > 0) {
    if (opt.first_moments().size() != named.size())
      throw contract_error("optimizer moment count does not match parameter count");
    for (const auto& m : opt.first_moments()) write_matrix(out, m);
    for (const auto& v : opt.second_moments()) write_matrix(out, v);
  }
  if (!out) throw data_error("write failed: " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint " + path.string());
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw data_error("not a checkpoint file (bad magic): " + path.string());
  std::uint32_t version = 0;
  read_bytes(in, &version, 4, path);
  if (version != kVersion)
    throw data_error("unsupported checkpoint version " + std::to_string(version) + ": " +
                     path.string());
  std::uint64_t len = 0;
  read_bytes(in, &len, 8, path);
  if (len == 0 || len > (1ull << 24))
    throw data_error("implausible checkpoint header in " + path.string());
  std::string text(len, '\0');
  read_bytes(in, text.data(), len, path);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.cfg = config_from(header.at("config"));
    ck.view_dims = header.at("view_dims").get<std::vector<std::int64_t>>();
    ck.epoch = header.at("epoch").get<std::int64_t>();
    ck.adam_step = header.at("adam_step").get<std::int64_t>();
    for (const auto& name : header.at("params"))
      ck.params.emplace_back(name.get<std::string>(), Matrix());
  } catch (const json::exception& e) {
    throw data_error(std::string("corrupt checkpoint header: ") + e.what());
  }
  for (auto& [name, m] : ck.params) m = read_matrix(in, path);
  if (ck.adam_step > 0) {
    ck.adam_m.reserve(ck.params.size());
    ck.adam_v.reserve(ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) ck.adam_m.push_back(read_matrix(in, path));
    for (std::size_t i = 0; i < ck.params.size(); ++i) ck.adam_v.push_back(read_matrix(in, path));
  }
  return ck;
}

model::Trainer restore(const Checkpoint& ck, std::vector<Matrix> views) {
  if (views.size() != ck.view_dims.size())
    throw data_error("checkpoint was trained on " + std::to_string(ck.view_dims.size()) +
                     " views, dataset has " + std::to_string(views.size()));
  for (std::size_t v = 0; v < views.size(); ++v)
    if (views[v].cols != ck.view_dims[v])
      throw data_error("view " + std::to_string(v) + " dimension mismatch: checkpoint expects " +
                       std::to_string(ck.view_dims[v]) + ", dataset has " +
                       std::to_string(views[v].cols));
  model::Trainer trainer(std::move(views), ck.cfg);
  auto named = trainer.named_parameters();
  if (named.size() != ck.params.size())
    throw data_error("checkpoint has " + std::to_string(ck.params.size()) +
                     " parameters, model expects " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != ck.params[i].first)
      throw data_error("checkpoint parameter '" + ck.params[i].first +
                       "' does not match model parameter '" + named[i].first + "'");
    if (!named[i].second->value.same_shape(ck.params[i].second))
      throw data_error("checkpoint parameter '" + ck.params[i].first + "' has shape " +
                       ck.params[i].second.shape_str() + ", model expects " +
                       named[i].second->value.shape_str());
    named[i].second->value = ck.params[i].second;
  }
  if (ck.adam_step > 0) {
    if (ck.adam_m.size() != named.size() || ck.adam_v.size() != named.size())
      throw data_error("checkpoint optimizer state is incomplete");
    trainer.optimizer().restore(ck.adam_step, ck.adam_m, ck.adam_v);
  }
  trainer.set_epochs_done(ck.epoch);
  return trainer;
}

}  // namespace gbcc::ckpt
