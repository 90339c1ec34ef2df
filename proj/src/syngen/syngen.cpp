#include "mhf/syngen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace mhf {

namespace {

constexpr std::array<std::pair<int, int>, kNumClasses> kScoreBrackets = {{{0, 3}, {4, 6}, {7, 9}, {10, 12}}};

// Independent stream per (seed, purpose, index) so users can be generated in
// any order or thread count with identical output.
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Largest-remainder rounding of proportions * total.
std::array<std::size_t, kNumClasses> target_counts(const std::array<double, kNumClasses>& p, std::size_t total) {
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    double exact = p[k] * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - std::floor(exact);
    assigned += counts[k];
  }
  std::array<int, kNumClasses> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % kNumClasses]];
  return counts;
}

// Sticky label chains drawn against a finite pool so the realized class
// counts match the targets exactly while each user's sequence persists.
std::vector<std::vector<Severity>> draw_label_sequences(const GeneratorConfig& cfg,
                                                        const std::vector<int>& sizes, std::mt19937_64& rng) {
  std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  auto remaining = target_counts(cfg.class_proportions, total);
  std::size_t remaining_total = total;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto draw = [&](const std::array<double, kNumClasses>& prior) {
    std::array<double, kNumClasses> w{};
    double sum = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      if (remaining[k] == 0 || cfg.class_proportions[k] <= 0) continue;
      double on_track = static_cast<double>(remaining[k]) /
                        (cfg.class_proportions[k] * static_cast<double>(remaining_total));
      w[k] = prior[k] * on_track;
      sum += w[k];
    }
    int chosen = -1;
    if (sum > 0) {
      double u = unif(rng) * sum;
      for (int k = 0; k < kNumClasses; ++k) {
        if (w[k] <= 0) continue;
        chosen = k;
        if (u < w[k]) break;
        u -= w[k];
      }
    } else {
      for (int k = 0; k < kNumClasses; ++k) {
        if (remaining[k] > 0) chosen = k;
      }
    }
    --remaining[chosen];
    --remaining_total;
    return static_cast<Severity>(chosen);
  };

  std::vector<std::vector<Severity>> out(sizes.size());
  for (std::size_t u = 0; u < sizes.size(); ++u) {
    auto& seq = out[u];
    seq.reserve(sizes[u]);
    seq.push_back(draw(cfg.class_proportions));
    for (int i = 1; i < sizes[u]; ++i) {
      std::array<double, kNumClasses> transition{};
      for (int k = 0; k < kNumClasses; ++k) {
        transition[k] = (1.0 - cfg.label_persistence) * cfg.class_proportions[k];
      }
      transition[rank(seq.back())] += cfg.label_persistence;
      seq.push_back(draw(transition));
    }
  }
  return out;
}

}  // namespace

std::array<double, kNumClasses> reference_class_proportions() {
  double total = std::accumulate(kReferenceClassCounts.begin(), kReferenceClassCounts.end(), 0.0);
  std::array<double, kNumClasses> p{};
  for (int k = 0; k < kNumClasses; ++k) p[k] = kReferenceClassCounts[k] / total;
  return p;
}

std::string participant_name(int user_index) { return fmt::format("u{:04d}", user_index); }

void GeneratorConfig::validate() const {
  if (num_users < 1) throw ValidationError("generator needs at least one user");
  if (samples_per_user.first < 3 || samples_per_user.first > samples_per_user.second) {
    throw ValidationError(fmt::format("samples_per_user ({}, {}) must satisfy 3 <= min <= max",
                                      samples_per_user.first, samples_per_user.second));
  }
  double sum = 0;
  for (double p : class_proportions) {
    if (!(p >= 0) || !std::isfinite(p)) throw ValidationError("class proportions must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(fmt::format("class proportions sum to {}, not 1", sum));
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0; };
  if (!finite_nonneg(separability)) throw ValidationError("separability must be finite and >= 0");
  if (!finite_nonneg(user_heterogeneity)) throw ValidationError("user_heterogeneity must be finite and >= 0");
  if (!(user_feature_saliency >= 0 && user_feature_saliency <= 1)) {
    throw ValidationError("user_feature_saliency must lie in [0, 1]");
  }
  if (!(noise_std > 0) || !std::isfinite(noise_std)) throw ValidationError("noise_std must be finite and > 0");
  if (!(ar_coefficient > -1 && ar_coefficient < 1)) throw ValidationError("ar_coefficient must lie in (-1, 1)");
  if (!(label_persistence >= 0 && label_persistence <= 1)) {
    throw ValidationError("label_persistence must lie in [0, 1]");
  }
  if (window_stride_days < 1) throw ValidationError("window_stride_days must be >= 1");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"num_users", num_users},
          {"samples_per_user", {samples_per_user.first, samples_per_user.second}},
          {"class_proportions", class_proportions},
          {"separability", separability},
          {"user_heterogeneity", user_heterogeneity},
          {"user_feature_saliency", user_feature_saliency},
          {"noise_std", noise_std},
          {"seed", seed},
          {"ar_coefficient", ar_coefficient},
          {"label_persistence", label_persistence},
          {"window_stride_days", window_stride_days}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    c.num_users = j.value("num_users", c.num_users);
    if (j.contains("samples_per_user")) {
      const auto& s = j.at("samples_per_user");
      c.samples_per_user = {s.at(0).get<int>(), s.at(1).get<int>()};
    }
    if (j.contains("class_proportions")) {
      const auto& p = j.at("class_proportions");
      if (p.size() != static_cast<std::size_t>(kNumClasses)) {
        throw ConfigError("class_proportions must have 4 entries");
      }
      for (int k = 0; k < kNumClasses; ++k) c.class_proportions[k] = p.at(k).get<double>();
    }
    c.separability = j.value("separability", c.separability);
    c.user_heterogeneity = j.value("user_heterogeneity", c.user_heterogeneity);
    c.user_feature_saliency = j.value("user_feature_saliency", c.user_feature_saliency);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.seed = j.value("seed", c.seed);
    c.ar_coefficient = j.value("ar_coefficient", c.ar_coefficient);
    c.label_persistence = j.value("label_persistence", c.label_persistence);
    c.window_stride_days = j.value("window_stride_days", c.window_stride_days);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed generator config: {}", e.what()));
  }
  return c;
}

Dataset generate(const GeneratorConfig& cfg, const FeatureSchema& schema, GeneratorTruth* truth) {
  cfg.validate();
  auto master = derived_rng(cfg.seed, 0, 0);

  std::vector<int> sizes(cfg.num_users);
  std::uniform_int_distribution<int> size_dist(cfg.samples_per_user.first, cfg.samples_per_user.second);
  for (auto& n : sizes) n = size_dist(master);

  std::array<double, kNumFeatures> global_relevance{};
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (auto& w : global_relevance) w = std_normal(master);

  auto labels = draw_label_sequences(cfg, sizes, master);

  std::vector<std::vector<SampleWindow>> per_user(cfg.num_users);
  std::vector<std::array<double, kNumFeatures>> offsets(cfg.num_users), relevance(cfg.num_users);
  const int num_salient = static_cast<int>(std::lround(cfg.user_feature_saliency * kNumFeatures));
  const double innovation_scale = std::sqrt(1.0 - cfg.ar_coefficient * cfg.ar_coefficient);

#pragma omp parallel for schedule(dynamic)
  for (int u = 0; u < cfg.num_users; ++u) {
    auto rng = derived_rng(cfg.seed, 1, static_cast<std::uint64_t>(u));
    std::normal_distribution<double> normal(0.0, 1.0);
    auto& offset = offsets[u];
    auto& weight = relevance[u];
    for (int f = 0; f < kNumFeatures; ++f) offset[f] = cfg.user_heterogeneity * normal(rng);
    weight = global_relevance;
    std::array<int, kNumFeatures> order{};
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < num_salient; ++i) {
      // User-specific relevance: mostly irrelevant, occasionally dominant.
      weight[order[i]] = std::uniform_real_distribution<double>(0, 1)(rng) < 0.3 ? 3.0 * normal(rng) : 0.0;
    }

    const std::string pid = participant_name(u);
    auto& out = per_user[u];
    out.reserve(sizes[u]);
    for (int i = 0; i < sizes[u]; ++i) {
      Severity label = labels[u][i];
      double class_level = cfg.separability * rank(label) / static_cast<double>(kNumClasses - 1);
      std::vector<FeatureVector> days(kWindowDays);
      for (int f = 0; f < kNumFeatures; ++f) {
        const auto& spec = schema[f];
        double noise = cfg.noise_std * normal(rng);
        for (int t = 0; t < kWindowDays; ++t) {
          if (t > 0) noise = cfg.ar_coefficient * noise + innovation_scale * cfg.noise_std * normal(rng);
          double z = offset[f] + class_level * weight[f] + noise;
          days[t][f] = std::clamp(spec.mean + spec.stddev * z, spec.min, spec.max);
        }
      }
      auto [lo, hi] = kScoreBrackets[rank(label)];
      int score = std::uniform_int_distribution<int>(lo, hi)(rng);
      out.emplace_back(pid, i * cfg.window_stride_days, std::move(days), score);
    }
  }

  std::vector<SampleWindow> all;
  for (auto& v : per_user) {
    for (auto& w : v) all.push_back(std::move(w));
  }
  if (truth) {
    truth->global_relevance = global_relevance;
    truth->users.clear();
    for (int u = 0; u < cfg.num_users; ++u) truth->users.push_back(participant_name(u));
    truth->user_offsets = offsets;
    truth->user_relevance = relevance;
  }
  return Dataset(std::move(all), Provenance::kSynthetic);
}

}  // namespace mhf
