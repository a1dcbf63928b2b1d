#include "foc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "foc/eval.hpp"

namespace foc {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::pretext:
      return "pretext";
    case Stage::finetune:
      return "finetune";
    case Stage::warmup_single_stage:
      return "warmup_single_stage";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "pretext") return Stage::pretext;
  if (s == "finetune") return Stage::finetune;
  if (s == "warmup_single_stage") return Stage::warmup_single_stage;
  throw std::invalid_argument("unknown stage '" + s + "'");
}

const char* to_string(FitSplit s) {
  switch (s) {
    case FitSplit::labeled:
      return "labeled";
    case FitSplit::unlabeled:
      return "unlabeled";
    case FitSplit::train:
      return "train";
  }
  return "?";
}

FitSplit parse_fit_split(const std::string& s) {
  if (s == "labeled") return FitSplit::labeled;
  if (s == "unlabeled") return FitSplit::unlabeled;
  if (s == "train") return FitSplit::train;
  throw std::invalid_argument("unknown fit split '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(head_only_lr > 0.0)) throw std::invalid_argument("train: learning rates must be > 0");
  weights.validate();
  sampler.validate();
  augmentation.validate();
}

bool MetricsRecord::same_values(const MetricsRecord& o) const {
  auto eq = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  return epoch == o.epoch && phase == o.phase && eq(normal_ce, o.normal_ce) &&
         eq(normal_mi_loss, o.normal_mi_loss) && eq(over_ce_inv, o.over_ce_inv) &&
         eq(over_mi_loss, o.over_mi_loss) && normal_val_acc == o.normal_val_acc &&
         over_val_acc == o.over_val_acc && selected_normal == o.selected_normal &&
         selected_over == o.selected_over && rows_processed == o.rows_processed && batches == o.batches;
}

// ---------------------------------------------------------------------------
// Head selection

std::vector<std::size_t> fit_rows(const Dataset& data, FitSplit split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.labels[i]) continue;
    const Split s = data.split[i];
    const bool take = (split == FitSplit::labeled && s == Split::labeled) ||
                      (split == FitSplit::unlabeled && s == Split::unlabeled) ||
                      (split == FitSplit::train && s != Split::validation);
    if (take) out.push_back(i);
  }
  return out;
}

namespace {

std::vector<int> labels_of(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(*data.labels[r]);
  return out;
}

std::vector<std::size_t> labeled_validation_rows(const Dataset& data) {
  std::vector<std::size_t> out;
  for (auto r : data.rows_with(Split::validation)) {
    if (data.labels[r]) out.push_back(r);
  }
  return out;
}

}  // namespace

HeadSelection select_best_head(const ModelState& model, const Dataset& data, FitSplit fit_split) {
  const auto val = labeled_validation_rows(data);
  if (val.empty()) throw std::invalid_argument("select_best_head: no labeled validation rows");
  const auto fit = fit_rows(data, fit_split);
  const auto val_ref = labels_of(data, val);
  const auto fit_ref = labels_of(data, fit);
  const std::size_t k_gt = model.config.k_gt;

  const nd::Tensor val_feat = backbone_forward(model, data.feature_tensor(val)).detach();
  const nd::Tensor fit_feat = fit.empty() ? nd::Tensor() : backbone_forward(model, data.feature_tensor(fit)).detach();

  HeadSelection sel;
  for (std::size_t h = 0; h < model.config.head_copies; ++h) {
    const auto pred = argmax_rows(head_forward(model, val_feat, HeadType::normal, h));
    sel.normal_acc.push_back(best_permutation_mapping(confusion(pred, val_ref, k_gt, k_gt)).accuracy);

    const auto over_val = argmax_rows(head_forward(model, val_feat, HeadType::over, h));
    ClusterMapping mapping;
    if (fit.empty()) {
      mapping.assign.assign(model.config.k_over, 0);
      mapping.kind = MappingKind::majority;
    } else {
      const auto over_fit = argmax_rows(head_forward(model, fit_feat, HeadType::over, h));
      mapping = majority_mapping(confusion(over_fit, fit_ref, model.config.k_over, k_gt));
    }
    sel.over_acc.push_back(accuracy(apply_mapping(over_val, mapping), val_ref));
  }
  for (std::size_t h = 1; h < sel.normal_acc.size(); ++h) {
    if (sel.normal_acc[h] > sel.normal_acc[sel.normal]) sel.normal = h;
    if (sel.over_acc[h] > sel.over_acc[sel.over]) sel.over = h;
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

enum class Phase { pretext, head_only, full };

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::pretext:
      return "pretext";
    case Phase::head_only:
      return "head_only";
    case Phase::full:
      return "full";
  }
  return "?";
}

struct EpochTotals {
  double sup[2] = {0.0, 0.0};
  double mi[2] = {0.0, 0.0};
  std::size_t sup_n[2] = {0, 0};
  std::size_t mi_n[2] = {0, 0};
  std::size_t rows = 0;
  std::size_t batches = 0;

  double mean_sup(HeadType t) const {
    const auto i = static_cast<std::size_t>(t);
    return sup_n[i] ? sup[i] / static_cast<double>(sup_n[i]) : std::numeric_limits<double>::quiet_NaN();
  }
  double mean_mi(HeadType t) const {
    const auto i = static_cast<std::size_t>(t);
    return mi_n[i] ? mi[i] / static_cast<double>(mi_n[i]) : std::numeric_limits<double>::quiet_NaN();
  }
};

std::vector<nd::AdamState> fresh_states(const std::vector<nd::Tensor>& params) {
  std::vector<nd::AdamState> out;
  for (const auto& p : params) out.push_back(nd::AdamState::for_shape(p.shape()));
  return out;
}

class Session {
 public:
  Session(ModelState model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch)
      : model_(std::move(model)),
        data_(data),
        config_(config),
        on_epoch_(on_epoch),
        planner_(config.sampler, data, derive_seed(config.seed, "sampler")),
        augment_rng_(derive_seed(config.seed, "augment")),
        opt_backbone_(fresh_states(model_.backbone_parameters())),
        opt_normal_(fresh_states(model_.head_parameters(HeadType::normal))),
        opt_over_(fresh_states(model_.head_parameters(HeadType::over))),
        has_validation_(!labeled_validation_rows(data).empty()) {
    if (data.dim != model_.config.input_dim) {
      throw std::invalid_argument("train: dataset has " + std::to_string(data.dim) + " features, model expects " +
                                  std::to_string(model_.config.input_dim));
    }
  }

  void run(std::size_t epochs, Phase phase, const LossWeights& weights, bool supervised_aug) {
    for (std::size_t e = 0; e < epochs; ++e) run_epoch(phase, weights, supervised_aug);
  }

  TrainResult finish() { return TrainResult{std::move(model_), std::move(metrics_)}; }

 private:
  void run_epoch(Phase phase, const LossWeights& weights, bool supervised_aug) {
    const auto start = std::chrono::steady_clock::now();
    const bool freeze = phase == Phase::head_only;
    const double lr = freeze ? config_.head_only_lr : config_.lr;
    EpochTotals totals;
    for (const auto& planned : planner_.plan_epoch()) {
      const TripletBatch batch = make_triplet_batch(data_, planned, config_.augmentation, augment_rng_,
                                                    supervised_aug, config_.sampler.repeats);
      const HeadType type = batch_counter_++ % 2 == 0 ? HeadType::normal : HeadType::over;
      step(batch, type, weights, freeze, lr, totals);
    }

    MetricsRecord rec;
    rec.epoch = ++epoch_;
    rec.phase = phase_name(phase);
    rec.normal_ce = totals.mean_sup(HeadType::normal);
    rec.normal_mi_loss = totals.mean_mi(HeadType::normal);
    rec.over_ce_inv = totals.mean_sup(HeadType::over);
    rec.over_mi_loss = totals.mean_mi(HeadType::over);
    rec.rows_processed = totals.rows;
    rec.batches = totals.batches;
    if (has_validation_) {
      auto sel = select_best_head(model_, data_, config_.fit_split);
      rec.normal_val_acc = std::move(sel.normal_acc);
      rec.over_val_acc = std::move(sel.over_acc);
      rec.selected_normal = sel.normal;
      rec.selected_over = sel.over;
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch_) on_epoch_(rec);
    metrics_.push_back(std::move(rec));
  }

  void step(const TripletBatch& batch, HeadType type, const LossWeights& weights, bool freeze, double lr,
            EpochTotals& totals) {
    const std::size_t b = batch.size();
    const auto lab = batch.labeled_rows();
    const std::size_t nl = lab.size();
    std::vector<int> lab_y;
    for (auto i : lab) lab_y.push_back(batch.labels[i]);

    const nd::Tensor views[] = {batch.x1, batch.x2, nd::gather_rows(batch.x3, lab)};
    nd::Tensor features = backbone_forward(model_, nd::concat_rows(views));
    if (freeze) features = features.detach();

    const std::size_t copies = model_.config.head_copies;
    const auto ti = static_cast<std::size_t>(type);
    nd::Tensor total;
    for (std::size_t h = 0; h < copies; ++h) {
      const nd::Tensor z = head_forward(model_, features, type, h);
      const nd::Tensor z1 = nd::slice_rows(z, 0, b);
      const nd::Tensor z2 = nd::slice_rows(z, b, 2 * b);
      const nd::Tensor unsup = mi_loss(z1, z2);
      totals.mi[ti] += unsup.item() / static_cast<double>(copies);

      nd::Tensor head_loss;
      if (nl > 0) {
        const nd::Tensor z1l = nd::gather_rows(z1, lab);
        nd::Tensor sup;
        if (type == HeadType::normal) {
          sup = cross_entropy(z1l, lab_y);
        } else {
          sup = ce_inverse_triplet(z1l, nd::gather_rows(z2, lab), nd::slice_rows(z, 2 * b, 2 * b + nl));
        }
        totals.sup[ti] += sup.item() / static_cast<double>(copies);
        if (weights.lambda_s > 0.0) head_loss = combined_loss(sup, unsup, weights);
      }
      if (head_loss.empty()) head_loss = nd::scale_shift(unsup, weights.lambda_u);
      total = h == 0 ? head_loss : nd::add(total, head_loss);
    }
    if (nl > 0) ++totals.sup_n[ti];
    ++totals.mi_n[ti];
    totals.rows += 2 * b + nl;
    ++totals.batches;

    nd::backward(nd::scale_shift(total, 1.0 / static_cast<double>(copies)));

    auto apply = [lr](std::vector<nd::Tensor> params, std::vector<nd::AdamState>& states) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        nd::adam_step(params[i], states[i], lr);
        params[i].zero_grad();
      }
    };
    apply(model_.head_parameters(type), type == HeadType::normal ? opt_normal_ : opt_over_);
    if (freeze) {
      for (auto p : model_.backbone_parameters()) p.zero_grad();
    } else {
      apply(model_.backbone_parameters(), opt_backbone_);
    }
  }

  ModelState model_;
  const Dataset& data_;
  TrainConfig config_;
  EpochCallback on_epoch_;
  EpochPlanner planner_;
  Rng augment_rng_;
  std::vector<nd::AdamState> opt_backbone_;
  std::vector<nd::AdamState> opt_normal_;
  std::vector<nd::AdamState> opt_over_;
  bool has_validation_ = false;
  std::size_t batch_counter_ = 0;
  std::size_t epoch_ = 0;
  std::vector<MetricsRecord> metrics_;
};

void require_two_labeled_classes(const Dataset& data) {
  if (data.labeled_classes().size() < 2) {
    throw DataError(
        "fine-tuning needs labeled rows from at least 2 classes: the inverse cross-entropy loss requires an "
        "example with a different label");
  }
}

LossWeights pretext_weights(const TrainConfig& config) {
  if (!(config.weights.lambda_u > 0.0)) throw std::invalid_argument("pretext: lambda_u must be > 0");
  return LossWeights{0.0, config.weights.lambda_u};
}

void finetune_phases(Session& session, const TrainConfig& config) {
  const std::size_t head_only = std::min(config.head_only_epochs, config.epochs);
  session.run(head_only, Phase::head_only, config.weights, config.supervised_aug);
  session.run(config.epochs - head_only, Phase::full, config.weights, config.supervised_aug);
}

}  // namespace

TrainResult run_pretext(ModelState model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  Session session(std::move(model), data, config, on_epoch);
  session.run(config.epochs, Phase::pretext, pretext_weights(config), config.supervised_aug);
  return session.finish();
}

TrainResult run_finetune(ModelState model, const Dataset& data, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  require_two_labeled_classes(data);
  Session session(std::move(model), data, config, on_epoch);
  finetune_phases(session, config);
  return session.finish();
}

TrainResult run_warmup_single_stage(ModelState model, const Dataset& data, const TrainConfig& config,
                                    const EpochCallback& on_epoch) {
  config.validate();
  require_two_labeled_classes(data);
  Session session(std::move(model), data, config, on_epoch);
  session.run(config.warmup_epochs, Phase::pretext, pretext_weights(config), false);
  finetune_phases(session, config);
  return session.finish();
}

TrainResult run_stage(ModelState model, const Dataset& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  switch (config.stage) {
    case Stage::pretext:
      return run_pretext(std::move(model), data, config, on_epoch);
    case Stage::finetune:
      return run_finetune(std::move(model), data, config, on_epoch);
    case Stage::warmup_single_stage:
      return run_warmup_single_stage(std::move(model), data, config, on_epoch);
  }
  throw std::logic_error("unreachable stage");
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointMagic = "focckpt v1";

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_checkpoint(const ModelState& model, std::ostream& out) {
  const auto& c = model.config;
  out << kCheckpointMagic << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "hidden_dims";
  for (auto h : c.hidden_dims) out << ' ' << h;
  out << '\n';
  out << "k_gt " << c.k_gt << '\n';
  out << "k_over " << c.k_over << '\n';
  out << "head_copies " << c.head_copies << '\n';
  out << "seed " << model.seed << '\n';
  const auto params = model.named_parameters();
  out << "params " << params.size() << '\n';
  for (const auto& [name, t] : params) {
    out << "param " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    bool first = true;
    for (double v : t.values()) {
      if (!first) out << ' ';
      out << format_g17(v);
      first = false;
    }
    out << '\n';
  }
  out << "end\n";
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint '" + path.string() + "' for writing");
  write_checkpoint(model, out);
  if (!out) throw CheckpointError("write to checkpoint '" + path.string() + "' failed");
}

ModelState read_checkpoint(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) -> std::istringstream {
    if (!std::getline(in, line)) {
      throw CheckpointError("checkpoint truncated at line " + std::to_string(line_no + 1) + " (expected " + what + ")");
    }
    ++line_no;
    return std::istringstream(line);
  };
  auto fail = [&](const std::string& msg) {
    return CheckpointError("checkpoint line " + std::to_string(line_no) + ": " + msg);
  };

  next_line("header");
  if (line != kCheckpointMagic) {
    throw fail("unsupported header '" + line + "' (expected '" + kCheckpointMagic + "')");
  }
  ModelConfig cfg;
  auto read_field = [&](const char* key, auto& value) {
    auto ss = next_line(key);
    std::string name;
    if (!(ss >> name) || name != key || !(ss >> value)) throw fail(std::string("expected '") + key + " <value>'");
  };
  read_field("input_dim", cfg.input_dim);
  {
    auto ss = next_line("hidden_dims");
    std::string name;
    if (!(ss >> name) || name != "hidden_dims") throw fail("expected 'hidden_dims ...'");
    cfg.hidden_dims.clear();
    std::size_t h = 0;
    while (ss >> h) cfg.hidden_dims.push_back(h);
  }
  read_field("k_gt", cfg.k_gt);
  read_field("k_over", cfg.k_over);
  read_field("head_copies", cfg.head_copies);
  std::uint64_t seed = 0;
  read_field("seed", seed);
  std::size_t count = 0;
  read_field("params", count);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }

  ModelState model = init_model(cfg, seed);
  auto params = model.named_parameters();
  if (params.size() != count) throw fail("parameter count " + std::to_string(count) + " does not match the config");
  for (auto& [name, tensor] : params) {
    auto ss = next_line("param header");
    std::string tag, got_name;
    std::size_t rows = 0, cols = 0;
    if (!(ss >> tag >> got_name >> rows >> cols) || tag != "param") throw fail("expected 'param <name> <rows> <cols>'");
    if (got_name != name) throw fail("expected parameter '" + name + "', found '" + got_name + "'");
    if (rows != tensor.rows() || cols != tensor.cols()) throw fail("shape mismatch for '" + name + "'");
    auto vs = next_line("parameter values");
    auto values = tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::string tok;
      if (!(vs >> tok)) throw fail("too few values for '" + name + "'");
      char* end = nullptr;
      values[i] = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || !std::isfinite(values[i])) throw fail("bad value '" + tok + "'");
    }
    std::string extra;
    if (vs >> extra) throw fail("too many values for '" + name + "'");
  }
  next_line("end");
  if (line != "end") throw fail("expected 'end'");
  return model;
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  ModelState model = load_checkpoint(path);
  if (!(model.config == expected)) {
    throw CheckpointError("checkpoint '" + path.string() + "' was written for a different model configuration");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Metrics log

namespace {

constexpr const char* kMetricsFormat = "focmetrics v1";

nlohmann::json num(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double get_num(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

}  // namespace

std::string metrics_header_line(const TrainConfig& config) {
  nlohmann::json j;
  j["format"] = kMetricsFormat;
  j["stage"] = to_string(config.stage);
  j["seed"] = config.seed;
  j["head_only_window_losses"] = "supervised+mi";
  j["head_alternation"] = "per_batch";
  return j.dump();
}

bool is_metrics_header(const std::string& line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  return j.is_object() && j.contains("format");
}

std::string metrics_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["phase"] = r.phase;
  j["normal_ce"] = num(r.normal_ce);
  j["normal_mi_loss"] = num(r.normal_mi_loss);
  j["over_ce_inv"] = num(r.over_ce_inv);
  j["over_mi_loss"] = num(r.over_mi_loss);
  j["normal_val_acc"] = r.normal_val_acc;
  j["over_val_acc"] = r.over_val_acc;
  j["selected_normal"] = r.selected_normal;
  j["selected_over"] = r.selected_over;
  j["rows_processed"] = r.rows_processed;
  j["batches"] = r.batches;
  return j.dump();
}

MetricsRecord parse_metrics_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);  // throws on malformed input
  MetricsRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.phase = j.at("phase").get<std::string>();
  r.normal_ce = get_num(j, "normal_ce");
  r.normal_mi_loss = get_num(j, "normal_mi_loss");
  r.over_ce_inv = get_num(j, "over_ce_inv");
  r.over_mi_loss = get_num(j, "over_mi_loss");
  r.normal_val_acc = j.at("normal_val_acc").get<std::vector<double>>();
  r.over_val_acc = j.at("over_val_acc").get<std::vector<double>>();
  r.selected_normal = j.at("selected_normal").get<std::size_t>();
  r.selected_over = j.at("selected_over").get<std::size_t>();
  r.rows_processed = j.at("rows_processed").get<std::size_t>();
  r.batches = j.at("batches").get<std::size_t>();
  return r;
}

}  // namespace foc
