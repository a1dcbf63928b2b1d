#include "foc/commands.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "foc/eval.hpp"

#ifndef FOC_VERSION
#define FOC_VERSION "0.0.0"
#endif

namespace foc {

using nlohmann::ordered_json;

std::string version() { return FOC_VERSION; }

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

ModelConfig model_config_for(const RunConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  m.input_dim = data.dim;
  m.k_gt = data.num_classes;
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

}  // namespace

void cmd_gen_data(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
  const Dataset data = generate_fuzzy_mixture(config.generator, config.seed);
  {
    auto file = open_out(out);
    write_dataset(data, file);
    if (!file) throw std::runtime_error("write to '" + out.string() + "' failed");
  }
  std::map<std::string, std::size_t> per_split;
  std::map<int, std::size_t> per_component;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ++per_split[to_string(data.split[i])];
    if (data.component[i]) ++per_component[*data.component[i]];
  }
  log << "wrote " << data.size() << " rows to " << out.string() << '\n';
  for (const auto& [name, n] : per_split) log << "  split " << name << ": " << n << '\n';
  for (const auto& [c, n] : per_component) log << "  component " << c << ": " << n << '\n';
}

TrainOutputs cmd_train(const RunConfig& config, const std::filesystem::path& data_path,
                       const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& init,
                       std::ostream& log) {
  const std::string started = utc_timestamp();
  const Dataset data = load_dataset(data_path);
  const ModelConfig mcfg = model_config_for(config, data);
  if (auto warning = mcfg.overclustering_warning(); !warning.empty()) log << "warning: " << warning << '\n';

  ModelState model = init ? load_checkpoint(*init, mcfg) : init_model(mcfg, derive_seed(config.seed, "init"));
  TrainConfig tcfg = config.train;
  tcfg.seed = config.seed;

  std::filesystem::create_directories(out_dir);
  TrainOutputs outputs{out_dir / "checkpoint.focckpt", out_dir / "metrics.jsonl", out_dir / "manifest.json"};

  auto metrics = open_out(outputs.metrics_log);
  metrics << metrics_header_line(tcfg) << '\n';
  std::vector<double> epoch_seconds;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = run_stage(std::move(model), data, tcfg, [&](const MetricsRecord& r) {
    metrics << metrics_line(r) << '\n';
    epoch_seconds.push_back(r.wall_seconds);
  });
  const double total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  metrics.close();
  save_checkpoint(result.model, outputs.checkpoint);

  ordered_json manifest;
  manifest["artifact_version"] = version();
  manifest["seed"] = config.seed;
  manifest["stage"] = to_string(tcfg.stage);
  manifest["data"] = data_path.string();
  manifest["init_checkpoint"] = init ? init->string() : "";
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_timestamp();
  manifest["wall_seconds"] = total_seconds;
  manifest["epoch_wall_seconds"] = epoch_seconds;
  manifest["config"] = config.dump();
  auto mf = open_out(outputs.manifest);
  mf << manifest.dump(2) << '\n';

  log << "trained " << result.metrics.size() << " epochs in " << std::fixed << std::setprecision(1)
      << total_seconds << " s; outputs in " << out_dir.string() << '\n';
  return outputs;
}

namespace {

std::vector<std::size_t> cluster_sizes(std::span<const int> pred, std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (int p : pred) ++sizes[static_cast<std::size_t>(p)];
  return sizes;
}

ordered_json consistency_json(const ConsistencyReport& r) {
  ordered_json j;
  j["overall"] = r.overall;
  j["cluster_mean"] = r.cluster_mean;
  j["cluster_stddev"] = r.cluster_stddev;
  j["evaluated"] = r.evaluated;
  ordered_json per = ordered_json::array();
  for (const auto& c : r.per_cluster) {
    per.push_back({{"cluster", c.cluster},
                   {"size", c.size},
                   {"consistent", c.consistent},
                   {"majority_component", c.majority_component},
                   {"value", c.value}});
  }
  j["per_cluster"] = per;
  return j;
}

}  // namespace

std::string cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_path,
                     const RunConfig& config) {
  const ModelState model = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(data_path);
  if (data.dim != model.config.input_dim) {
    throw ConfigError("dataset has " + std::to_string(data.dim) + " features but the checkpoint expects " +
                      std::to_string(model.config.input_dim));
  }
  if (data.num_classes > model.config.k_gt) {
    throw ConfigError("dataset has " + std::to_string(data.num_classes) + " classes but the checkpoint has " +
                      std::to_string(model.config.k_gt));
  }
  const std::size_t k_gt = model.config.k_gt, k_over = model.config.k_over;

  // Scored rows: labeled validation rows, or every labeled row without a validation split.
  std::vector<std::size_t> scored;
  for (auto r : data.rows_with(Split::validation)) {
    if (data.labels[r]) scored.push_back(r);
  }
  if (scored.empty()) {
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (data.labels[r]) scored.push_back(r);
    }
  }
  std::vector<int> ref;
  for (auto r : scored) ref.push_back(*data.labels[r]);

  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const nd::Tensor features = backbone_forward(model, data.feature_tensor(all)).detach();

  std::size_t best_normal = 0, best_over = 0;
  if (!data.rows_with(Split::validation).empty() && !ref.empty()) {
    const auto sel = select_best_head(model, data, config.train.fit_split);
    best_normal = sel.normal;
    best_over = sel.over;
  }
  const auto normal_pred = argmax_rows(head_forward(model, features, HeadType::normal, best_normal));
  const auto over_pred = argmax_rows(head_forward(model, features, HeadType::over, best_over));
  auto pick = [](const std::vector<int>& pred, std::span<const std::size_t> rows) {
    std::vector<int> out;
    for (auto r : rows) out.push_back(pred[r]);
    return out;
  };

  ordered_json doc;
  doc["checkpoint"] = checkpoint.string();
  doc["data"] = data_path.string();
  doc["scored_rows"] = scored.size();

  ordered_json normal;
  normal["best_head"] = best_normal;
  {
    const auto p = pick(normal_pred, scored);
    const auto perm = best_permutation_mapping(confusion(p, ref, k_gt, k_gt));
    normal["accuracy"] = perm.accuracy;
    normal["macro_f1"] = macro_f1(apply_mapping(p, perm.mapping), ref, k_gt);
    normal["mapping"] = perm.mapping.assign;
  }
  normal["cluster_sizes"] = cluster_sizes(normal_pred, k_gt);

  ordered_json over;
  over["best_head"] = best_over;
  {
    const auto fit = fit_rows(data, config.train.fit_split);
    std::vector<int> fit_ref;
    for (auto r : fit) fit_ref.push_back(*data.labels[r]);
    const auto mapping = majority_mapping(confusion(pick(over_pred, fit), fit_ref, k_over, k_gt));
    const auto mapped = apply_mapping(pick(over_pred, scored), mapping);
    over["fit_split"] = to_string(config.train.fit_split);
    over["accuracy"] = accuracy(mapped, ref);
    over["macro_f1"] = macro_f1(mapped, ref, k_gt);
    over["mapping"] = mapping.assign;
  }
  over["cluster_sizes"] = cluster_sizes(over_pred, k_over);
  doc["normal"] = normal;
  doc["over"] = over;

  if (data.has_components()) {
    std::vector<std::size_t> with_comp;
    std::vector<int> comps;
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (data.component[r]) {
        with_comp.push_back(r);
        comps.push_back(*data.component[r]);
      }
    }
    doc["consistency"] = {
        {"normal", consistency_json(consistency(pick(normal_pred, with_comp), comps, config.exclude_components))},
        {"over", consistency_json(consistency(pick(over_pred, with_comp), comps, config.exclude_components))}};
  }
  if (data.dim == 2) {
    ordered_json points = ordered_json::array();
    for (std::size_t r = 0; r < data.size(); ++r) {
      points.push_back({data.row(r)[0], data.row(r)[1], normal_pred[r], over_pred[r],
                        data.component[r] ? ordered_json(*data.component[r]) : ordered_json(nullptr)});
    }
    doc["points_columns"] = {"x", "y", "normal_cluster", "over_cluster", "component"};
    doc["points"] = points;
  }
  return doc.dump(2);
}

namespace {

std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

}  // namespace

void cmd_report(const std::filesystem::path& metrics_log, const std::filesystem::path& out,
                const std::optional<std::filesystem::path>& eval_doc,
                const std::optional<std::filesystem::path>& scatter_out) {
  std::ifstream in(metrics_log, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open metrics log '" + metrics_log.string() + "'");
  std::vector<MetricsRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      if (line_no == 1 && is_metrics_header(line)) continue;
      records.push_back(parse_metrics_line(line));
    } catch (const std::exception& e) {
      throw ConfigError(metrics_log.string() + ": malformed record at line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }

  auto csv = open_out(out);
  csv << "epoch,phase,normal_ce,normal_mi_loss,over_ce_inv,over_mi_loss,normal_val_acc,over_val_acc,"
         "selected_normal,selected_over,rows_processed\n";
  for (const auto& r : records) {
    const double nacc = r.normal_val_acc.empty() ? NAN : r.normal_val_acc[r.selected_normal];
    const double oacc = r.over_val_acc.empty() ? NAN : r.over_val_acc[r.selected_over];
    csv << r.epoch << ',' << r.phase << ',' << csv_num(r.normal_ce) << ',' << csv_num(r.normal_mi_loss) << ','
        << csv_num(r.over_ce_inv) << ',' << csv_num(r.over_mi_loss) << ',' << csv_num(nacc) << ','
        << csv_num(oacc) << ',' << r.selected_normal << ',' << r.selected_over << ',' << r.rows_processed << '\n';
  }

  if (eval_doc) {
    std::ifstream ein(*eval_doc);
    if (!ein) throw std::runtime_error("cannot open eval document '" + eval_doc->string() + "'");
    const auto doc = nlohmann::json::parse(ein);
    if (!doc.contains("points")) throw ConfigError("eval document has no 2-D points for a scatter export");
    std::filesystem::path target = scatter_out ? *scatter_out : std::filesystem::path(out).replace_extension(".scatter.csv");
    auto sc = open_out(target);
    sc << "x,y,normal_cluster,over_cluster,component\n";
    for (const auto& p : doc["points"]) {
      sc << csv_num(p[0].get<double>()) << ',' << csv_num(p[1].get<double>()) << ',' << p[2].get<int>() << ','
         << p[3].get<int>() << ',';
      if (!p[4].is_null()) sc << p[4].get<int>();
      sc << '\n';
    }
  }
}

}  // namespace foc
