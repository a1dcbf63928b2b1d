#include "foc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace foc {

const char* to_string(Split s) {
  switch (s) {
    case Split::labeled:
      return "labeled";
    case Split::unlabeled:
      return "unlabeled";
    case Split::validation:
      return "validation";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "labeled") return Split::labeled;
  if (s == "unlabeled") return Split::unlabeled;
  if (s == "validation") return Split::validation;
  throw DataError("unknown split '" + s + "'");
}

// ---------------------------------------------------------------------------
// Dataset

bool Dataset::has_components() const {
  return std::any_of(component.begin(), component.end(), [](const auto& c) { return c.has_value(); });
}

std::vector<std::size_t> Dataset::rows_with(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<int> Dataset::labeled_classes() const {
  std::set<int> classes;
  for (std::size_t i = 0; i < size(); ++i) {
    if (split[i] == Split::labeled && labels[i]) classes.insert(*labels[i]);
  }
  return {classes.begin(), classes.end()};
}

nd::Tensor Dataset::feature_tensor(std::span<const std::size_t> rows) const {
  std::vector<double> v;
  v.reserve(rows.size() * dim);
  for (auto r : rows) {
    auto x = row(r);
    v.insert(v.end(), x.begin(), x.end());
  }
  return nd::Tensor({rows.size(), dim}, std::move(v));
}

void Dataset::validate() const {
  const std::size_t n = size();
  if (features.size() != n * dim || labels.size() != n || component.size() != n || ids.size() != n) {
    throw DataError("dataset: column lengths disagree");
  }
  if (has_annotation() && annotation.size() != n * num_classes) {
    throw DataError("dataset: annotation block has wrong size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = "dataset row " + std::to_string(i);
    if (split[i] == Split::labeled && !labels[i]) throw DataError(where + ": labeled row without label");
    if (labels[i] && (*labels[i] < 0 || (num_classes > 0 && *labels[i] >= static_cast<int>(num_classes)))) {
      throw DataError(where + ": label out of range");
    }
    if (has_annotation()) {
      double s = 0.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double a = annotation[i * num_classes + c];
        if (a < 0.0) throw DataError(where + ": negative annotation entry");
        s += a;
      }
      if (std::abs(s - 1.0) > 1e-9) throw DataError(where + ": annotation sums to " + std::to_string(s));
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic mixtures

bool ComponentSpec::fuzzy() const {
  return std::none_of(annotation.begin(), annotation.end(), [](double a) { return a == 1.0; });
}

GeneratorConfig GeneratorConfig::fuzzy_three_blobs(std::size_t per_component, double scale) {
  GeneratorConfig g;
  g.components = {
      {{-3.0, 0.0}, scale, per_component, {1.0, 0.0}},
      {{3.0, 0.0}, scale, per_component, {0.0, 1.0}},
      {{0.0, 0.0}, scale, per_component, {0.5, 0.5}},
  };
  return g;
}

namespace {

std::size_t certain_label(const ComponentSpec& c) {
  return static_cast<std::size_t>(std::max_element(c.annotation.begin(), c.annotation.end()) -
                                  c.annotation.begin());
}

}  // namespace

void GeneratorConfig::validate() const {
  if (components.size() < 2) throw DataError("generator: at least 2 components required");
  const std::size_t d = components.front().mean.size();
  const std::size_t k = components.front().annotation.size();
  if (d == 0) throw DataError("generator: components need a mean vector");
  if (k < 2) throw DataError("generator: annotations must cover at least 2 classes");
  std::set<std::size_t> classes;
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    const std::string where = "generator component " + std::to_string(i);
    if (c.mean.size() != d) throw DataError(where + ": mean dimension differs");
    if (c.annotation.size() != k) throw DataError(where + ": annotation width differs");
    if (!(c.scale >= 0.0)) throw DataError(where + ": scale must be >= 0");
    double s = 0.0;
    for (double a : c.annotation) {
      if (a < 0.0) throw DataError(where + ": negative annotation entry");
      s += a;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError(where + ": annotation does not sum to 1");
    if (!c.fuzzy()) classes.insert(certain_label(c));
  }
  if (classes.size() < 2) throw DataError("generator: fewer than 2 classes implied by certain components");
  if (labeled_fraction < 0.0 || validation_fraction < 0.0 || labeled_fraction + validation_fraction > 1.0) {
    throw DataError("generator: split fractions must be >= 0 and sum to <= 1");
  }
}

Dataset generate_fuzzy_mixture(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "generate"));
  Dataset data;
  data.dim = config.components.front().mean.size();
  data.num_classes = config.components.front().annotation.size();

  for (std::size_t ci = 0; ci < config.components.size(); ++ci) {
    const auto& comp = config.components[ci];
    std::vector<Split> splits(comp.count, Split::unlabeled);
    if (!comp.fuzzy()) {
      const auto n_lab = static_cast<std::size_t>(std::llround(config.labeled_fraction * comp.count));
      const auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * comp.count));
      std::fill_n(splits.begin(), std::min(n_lab, comp.count), Split::labeled);
      std::fill_n(splits.begin() + std::min(n_lab, comp.count), std::min(n_val, comp.count - std::min(n_lab, comp.count)),
                  Split::validation);
      rng.shuffle(std::span(splits));
    }
    for (std::size_t j = 0; j < comp.count; ++j) {
      data.ids.push_back(static_cast<long>(data.ids.size()));
      for (double m : comp.mean) data.features.push_back(m + comp.scale * rng.normal());
      data.split.push_back(splits[j]);
      data.labels.push_back(comp.fuzzy() ? std::nullopt : std::optional<int>(static_cast<int>(certain_label(comp))));
      data.component.push_back(static_cast<int>(ci));
      data.annotation.insert(data.annotation.end(), comp.annotation.begin(), comp.annotation.end());
    }
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& what) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw DataError("cannot parse " + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

void write_dataset(const Dataset& data, std::ostream& out) {
  out << "id";
  for (std::size_t j = 0; j < data.dim; ++j) out << ",f" << j;
  out << ",label,split,component";
  if (data.has_annotation()) {
    for (std::size_t c = 0; c < data.num_classes; ++c) out << ",a_" << c;
  }
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i];
    for (double v : data.row(i)) out << ',' << format_double(v);
    out << ',';
    if (data.labels[i]) out << *data.labels[i];
    out << ',' << to_string(data.split[i]) << ',';
    if (data.component[i]) out << *data.component[i];
    if (data.has_annotation()) {
      for (std::size_t c = 0; c < data.num_classes; ++c) {
        out << ',' << format_double(data.annotation[i * data.num_classes + c]);
      }
    }
    out << '\n';
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_dataset(data, out);
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("line 1: missing header");
  const auto header = split_csv(line);
  std::size_t pos = 0;
  if (header.empty() || header[pos++] != "id") throw DataError("line 1: header must start with 'id'");

  Dataset data;
  while (pos < header.size() && header[pos] == "f" + std::to_string(data.dim)) {
    ++data.dim;
    ++pos;
  }
  if (data.dim == 0) throw DataError("line 1: no feature columns f0..");
  for (const char* name : {"label", "split", "component"}) {
    if (pos >= header.size() || header[pos] != name) {
      throw DataError(std::string("line 1: expected column '") + name + "'");
    }
    ++pos;
  }
  std::size_t k_annot = 0;
  while (pos < header.size() && header[pos] == "a_" + std::to_string(k_annot)) {
    ++k_annot;
    ++pos;
  }
  if (pos != header.size()) throw DataError("line 1: unexpected column '" + header[pos] + "'");
  const std::size_t width = header.size();

  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      const auto cells = split_csv(line);
      if (cells.size() != width) {
        throw DataError("expected " + std::to_string(width) + " columns, found " + std::to_string(cells.size()));
      }
      std::size_t c = 0;
      data.ids.push_back(parse_number<long>(cells[c++], "id"));
      for (std::size_t j = 0; j < data.dim; ++j) {
        const double v = parse_number<double>(cells[c++], "feature");
        if (!std::isfinite(v)) throw DataError("non-finite feature");
        data.features.push_back(v);
      }
      const std::string& lab = cells[c++];
      const Split sp = parse_split(cells[c++]);
      const std::string& comp = cells[c++];
      if (lab.empty()) {
        if (sp == Split::labeled) throw DataError("labeled row without label");
        data.labels.push_back(std::nullopt);
      } else {
        const int y = parse_number<int>(lab, "label");
        if (y < 0) throw DataError("negative label");
        max_label = std::max(max_label, y);
        data.labels.push_back(y);
      }
      data.split.push_back(sp);
      data.component.push_back(comp.empty() ? std::nullopt : std::optional<int>(parse_number<int>(comp, "component")));
      double total = 0.0;
      for (std::size_t a = 0; a < k_annot; ++a) {
        const double v = parse_number<double>(cells[c++], "annotation");
        if (!(v >= 0.0)) throw DataError("negative annotation entry");
        total += v;
        data.annotation.push_back(v);
      }
      if (k_annot > 0 && std::abs(total - 1.0) > 1e-9) {
        throw DataError("annotation columns sum to " + format_double(total) + ", not 1");
      }
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  data.num_classes = k_annot > 0 ? k_annot : static_cast<std::size_t>(max_label + 1);
  if (k_annot > 0 && max_label >= static_cast<int>(k_annot)) {
    throw DataError("label " + std::to_string(max_label) + " outside the annotation width");
  }
  data.validate();
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Augmentation and batches

void AugmentationPolicy::validate() const {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("augmentation: noise_sigma must be >= 0");
  if (!(scale_jitter >= 0.0)) throw std::invalid_argument("augmentation: scale_jitter must be >= 0");
}

std::vector<double> augment(std::span<const double> x, const AugmentationPolicy& policy, Rng& rng) {
  const double u = 1.0 + policy.scale_jitter * (2.0 * rng.uniform() - 1.0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * u + policy.noise_sigma * rng.normal();
  return out;
}

std::vector<std::size_t> TripletBatch::labeled_rows() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labeled_mask.size(); ++i) {
    if (labeled_mask[i]) out.push_back(i);
  }
  return out;
}

TripletBatch make_triplet_batch(const Dataset& data, const PlannedBatch& rows, const AugmentationPolicy& policy,
                                Rng& rng, bool supervised_aug, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("triplet batch: repeats must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  std::size_t n_labeled = 0;
  if (!rows.labeled.empty()) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.split[i] == Split::labeled) {
        by_class[*data.labels[i]].push_back(i);
        ++n_labeled;
      }
    }
  }

  // Uniform draw over labeled rows whose class differs from y.
  auto draw_other_class = [&](int y) -> std::size_t {
    const std::size_t same = by_class[y].size();
    if (n_labeled == same) {
      throw DataError("triplet batch: class " + std::to_string(y) +
                      " is the only labeled class; the inverse cross-entropy needs a differing label");
    }
    std::size_t pick = rng.index(n_labeled - same);
    for (const auto& [cls, members] : by_class) {
      if (cls == y) continue;
      if (pick < members.size()) return members[pick];
      pick -= members.size();
    }
    return 0;  // unreachable
  };
  // Uniform draw over the other labeled rows of class y; the row itself when alone.
  auto draw_same_class = [&](int y, std::size_t self) -> std::size_t {
    const auto& members = by_class[y];
    if (members.size() < 2) return self;
    const auto self_pos =
        static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), self) - members.begin());
    std::size_t pick = rng.index(members.size() - 1);
    if (pick >= self_pos) ++pick;
    return members[pick];
  };

  TripletBatch batch;
  const std::size_t d = data.dim;
  const std::size_t total = rows.size() * repeats;
  std::vector<double> v1, v2, v3;
  v1.reserve(total * d);
  v2.reserve(total * d);
  v3.reserve(total * d);

  auto emit = [&](std::size_t r, bool labeled) {
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      auto a = augment(data.row(r), policy, rng);
      v1.insert(v1.end(), a.begin(), a.end());
      batch.source1.push_back(static_cast<long>(r));
      if (labeled) {
        const int y = *data.labels[r];
        const std::size_t src2 = supervised_aug ? draw_same_class(y, r) : r;
        auto b = augment(data.row(src2), policy, rng);
        v2.insert(v2.end(), b.begin(), b.end());
        const std::size_t src3 = draw_other_class(y);
        auto c = augment(data.row(src3), policy, rng);
        v3.insert(v3.end(), c.begin(), c.end());
        batch.source2.push_back(static_cast<long>(src2));
        batch.source3.push_back(static_cast<long>(src3));
        batch.labels.push_back(y);
      } else {
        auto b = augment(data.row(r), policy, rng);
        v2.insert(v2.end(), b.begin(), b.end());
        v3.insert(v3.end(), d, 0.0);
        batch.source2.push_back(static_cast<long>(r));
        batch.source3.push_back(-1);
        batch.labels.push_back(-1);
      }
      batch.labeled_mask.push_back(labeled);
    }
  };
  for (auto r : rows.labeled) {
    if (data.split[r] != Split::labeled) {
      throw DataError("triplet batch: row " + std::to_string(r) + " is not tagged labeled");
    }
    emit(r, true);
  }
  for (auto r : rows.unlabeled) emit(r, false);

  batch.x1 = nd::Tensor({total, d}, std::move(v1));
  batch.x2 = nd::Tensor({total, d}, std::move(v2));
  batch.x3 = nd::Tensor({total, d}, std::move(v3));
  return batch;
}

// ---------------------------------------------------------------------------
// Epoch planning

std::size_t SamplerConfig::unlabeled_slots() const {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(batch_size)));
}

void SamplerConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("sampler: batch_size must be >= 2");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("sampler: ratio must lie in [0, 1]");
  if (repeats < 1) throw std::invalid_argument("sampler: repeats must be >= 1");
}

EpochPlanner::EpochPlanner(const SamplerConfig& config, const Dataset& data, std::uint64_t seed)
    : config_(config), rng_(seed) {
  config_.validate();
  labeled_ = data.rows_with(Split::labeled);
  unlabeled_ = data.rows_with(Split::unlabeled);
  if (config_.ratio < 1.0 && labeled_.empty()) {
    throw DataError("sampler: ratio < 1 requires labeled rows");
  }
  if (config_.ratio >= 1.0) {
    // Pretext mode: every training row is treated as unlabeled.
    unlabeled_.insert(unlabeled_.end(), labeled_.begin(), labeled_.end());
    std::sort(unlabeled_.begin(), unlabeled_.end());
    labeled_.clear();
  }
}

std::size_t EpochPlanner::next_unlabeled() {
  // One fixed shuffled cycle: any N_u consecutive draws cover every row.
  if (unlabeled_order_.empty()) {
    unlabeled_order_ = unlabeled_;
    rng_.shuffle(std::span(unlabeled_order_));
  }
  const std::size_t r = unlabeled_order_[cursor_];
  cursor_ = (cursor_ + 1) % unlabeled_order_.size();
  return r;
}

std::vector<PlannedBatch> EpochPlanner::plan_epoch() {
  std::vector<PlannedBatch> plan;
  const std::size_t b = config_.batch_size;
  if (config_.ratio >= 1.0) {
    std::vector<std::size_t> order = unlabeled_;
    rng_.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += b) {
      PlannedBatch batch;
      batch.unlabeled.assign(order.begin() + start, order.begin() + std::min(order.size(), start + b));
      plan.push_back(std::move(batch));
    }
    return plan;
  }

  const std::size_t u_slots = std::min(config_.unlabeled_slots(), b - 1);
  const std::size_t l_slots = b - u_slots;
  std::vector<std::size_t> order = labeled_;
  rng_.shuffle(std::span(order));
  for (std::size_t start = 0; start < order.size(); start += l_slots) {
    PlannedBatch batch;
    batch.labeled.assign(order.begin() + start, order.begin() + std::min(order.size(), start + l_slots));
    const std::size_t take = std::min(u_slots, unlabeled_.size());
    for (std::size_t i = 0; i < take; ++i) batch.unlabeled.push_back(next_unlabeled());
    plan.push_back(std::move(batch));
  }
  return plan;
}

}  // namespace foc
