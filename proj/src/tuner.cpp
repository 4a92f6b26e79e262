#include "fewshot/tuner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fewshot/parallel.hpp"

namespace fewshot {

std::vector<Selector> reference_selectors() {
  std::vector<Selector> out;
  for (GeneratorId g : kAllGenerators) out.push_back(Selector::single(g));
  out.push_back(Selector::rand());
  out.push_back(Selector::bpm());
  return out;
}

std::uint64_t paired_run_seed(std::uint64_t seed, const ObjectiveSpec& spec) {
  return mix_seed(seed, spec.id());
}

// ---------------------------------------------------------------------------

FitnessEvaluator::FitnessEvaluator(FitnessConfig config) : config_(std::move(config)) {
  if (config_.instances.empty()) fail(ErrorKind::config, "fitness needs at least one instance");
  if (config_.seeds.empty()) fail(ErrorKind::config, "fitness needs at least one seed");
}

FitnessEvaluator::Key FitnessEvaluator::key_of(const WeightVector& w) {
  Key k{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) k[i] = std::bit_cast<std::uint64_t>(w.values[i]);
  return k;
}

const std::vector<std::optional<NormalizationTransform>>& FitnessEvaluator::references() {
  if (have_references_) return references_;
  const auto selectors = reference_selectors();
  const std::size_t ni = config_.instances.size(), ns = config_.seeds.size(), na = selectors.size();
  std::vector<double> best(ni * ns * na);
  parallel_for(best.size(), config_.workers, [&](std::size_t task) {
    const std::size_t a = task % na, s = (task / na) % ns, i = task / (na * ns);
    const auto& spec = config_.instances[i];
    OptimizerConfig cfg;
    cfg.epochs = config_.epochs;
    cfg.batch = config_.batch;
    cfg.simulations = config_.simulations;
    cfg.selector = selectors[a];
    cfg.seed = paired_run_seed(config_.seeds[s], spec);
    best[task] = run_optimization(*make_objective(spec), cfg).best_value;
  });
  references_.clear();
  for (std::size_t i = 0; i < ni; ++i) {
    const auto first = best.begin() + static_cast<std::ptrdiff_t>(i * ns * na);
    references_.push_back(reference_transform(
        std::span<const double>(&*first, ns * na)));
  }
  have_references_ = true;
  return references_;
}

std::size_t FitnessEvaluator::degenerate_instances() {
  const auto& refs = references();
  return static_cast<std::size_t>(std::count(refs.begin(), refs.end(), std::nullopt));
}

std::vector<std::vector<double>> FitnessEvaluator::best_values(const std::vector<WeightVector>& ws) {
  const std::size_t ni = config_.instances.size(), ns = config_.seeds.size();
  const std::size_t per = ni * ns;
  std::vector<double> flat(ws.size() * per);
  parallel_for(flat.size(), config_.workers, [&](std::size_t task) {
    const std::size_t w = task / per, i = (task % per) / ns, s = task % ns;
    const auto& spec = config_.instances[i];
    OptimizerConfig cfg;
    cfg.epochs = config_.epochs;
    cfg.batch = config_.batch;
    cfg.simulations = config_.simulations;
    cfg.selector = Selector::hpfso(ws[w]);
    cfg.seed = paired_run_seed(config_.seeds[s], spec);
    flat[task] = run_optimization(*make_objective(spec), cfg).best_value;
  });
  hpfso_runs_ += flat.size();
  std::vector<std::vector<double>> out(ws.size());
  for (std::size_t w = 0; w < ws.size(); ++w)
    out[w].assign(flat.begin() + static_cast<std::ptrdiff_t>(w * per),
                  flat.begin() + static_cast<std::ptrdiff_t>((w + 1) * per));
  return out;
}

std::vector<std::optional<double>> FitnessEvaluator::normalized_costs(const WeightVector& w) {
  const auto& refs = references();
  const auto values = best_values({w}).front();
  const std::size_t ns = config_.seeds.size();
  std::vector<std::optional<double>> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    if (const auto& t = refs[k / ns]) out[k] = t->apply(values[k]);
  return out;
}

std::vector<double> FitnessEvaluator::fitness(const std::vector<WeightVector>& ws) {
  const auto& refs = references();
  std::vector<WeightVector> todo;
  std::vector<Key> todo_keys;
  for (const auto& w : ws) {
    const Key k = key_of(w);
    if (memo_.count(k) || std::find(todo_keys.begin(), todo_keys.end(), k) != todo_keys.end())
      continue;
    todo.push_back(w);
    todo_keys.push_back(k);
  }
  if (!todo.empty()) {
    const auto values = best_values(todo);
    const std::size_t ns = config_.seeds.size();
    for (std::size_t t = 0; t < todo.size(); ++t) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < values[t].size(); ++k)
        if (const auto& r = refs[k / ns]) {
          sum += r->apply(values[t][k]);
          ++count;
        }
      if (count == 0) fail(ErrorKind::runtime, "every training instance is degenerate");
      memo_[todo_keys[t]] = sum / static_cast<double>(count);
    }
  }
  std::vector<double> out;
  out.reserve(ws.size());
  for (const auto& w : ws) out.push_back(memo_.at(key_of(w)));
  return out;
}

double FitnessEvaluator::fitness(const WeightVector& w) { return fitness(std::vector{w}).front(); }

// ---------------------------------------------------------------------------

TunerConfig::TunerConfig() {
  lower.fill(-10.0);
  upper.fill(10.0);
}

void TunerConfig::validate() const {
  if (population < 2 || population % 2 != 0)
    fail(ErrorKind::config, "population size must be even and at least 2");
  if (generations < 1) fail(ErrorKind::config, "at least one generation is required");
  for (std::size_t i = 0; i < kFeatureCount; ++i)
    if (!(lower[i] < upper[i])) fail(ErrorKind::config, "weight bounds need lower < upper");
  if (!(mutation_std >= 0.0)) fail(ErrorKind::config, "mutation std must be nonnegative");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
    fail(ErrorKind::config, "mutation rate must lie in [0, 1]");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0))
    fail(ErrorKind::config, "crossover rate must lie in [0, 1]");
}

WeightVector random_weights(RngStream& rng, double lower, double upper) {
  WeightVector w;
  for (auto& v : w.values) v = rng.uniform(lower, upper);
  return w;
}

namespace {

std::size_t argmin_first(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TunerResult tune(const TunerConfig& config, const BatchFitness& fitness,
                 const GenerationCallback& on_generation) {
  config.validate();
  RngStream root(config.seed, "tuner");
  const std::size_t p = config.population;

  std::vector<WeightVector> pop(p);
  {
    auto init = root.substream("init");
    for (auto& w : pop)
      for (std::size_t i = 0; i < kFeatureCount; ++i) w.values[i] = init.uniform(config.lower[i], config.upper[i]);
  }

  TunerResult result;
  std::map<std::array<std::uint64_t, kFeatureCount>, double> seen;
  auto evaluate = [&](const std::vector<WeightVector>& ws) {
    std::vector<WeightVector> fresh;
    for (const auto& w : ws) {
      std::array<std::uint64_t, kFeatureCount> k{};
      for (std::size_t i = 0; i < kFeatureCount; ++i) k[i] = std::bit_cast<std::uint64_t>(w.values[i]);
      if (!seen.count(k)) {
        seen[k] = std::numeric_limits<double>::quiet_NaN();
        fresh.push_back(w);
      }
    }
    if (!fresh.empty()) {
      const auto values = fitness(fresh);
      if (values.size() != fresh.size()) fail(ErrorKind::contract, "fitness returned the wrong count");
      for (std::size_t t = 0; t < fresh.size(); ++t) {
        std::array<std::uint64_t, kFeatureCount> k{};
        for (std::size_t i = 0; i < kFeatureCount; ++i)
          k[i] = std::bit_cast<std::uint64_t>(fresh[t].values[i]);
        seen[k] = values[t];
      }
      result.evaluations += fresh.size();
    }
    std::vector<double> out;
    for (const auto& w : ws) {
      std::array<std::uint64_t, kFeatureCount> k{};
      for (std::size_t i = 0; i < kFeatureCount; ++i) k[i] = std::bit_cast<std::uint64_t>(w.values[i]);
      out.push_back(seen.at(k));
    }
    return out;
  };

  std::vector<double> fit = evaluate(pop);
  auto record = [&](std::size_t generation) {
    const std::size_t e = argmin_first(fit);
    result.incumbents.push_back(pop[e]);
    result.trajectory.push_back(fit[e]);
    if (on_generation) on_generation(generation, result);
  };
  record(1);

  for (std::size_t g = 2; g <= config.generations; ++g) {
    auto rng = root.substream("generation/" + std::to_string(g));
    auto tournament = [&] {
      const std::size_t a = rng.uniform_index(p), b = rng.uniform_index(p);
      return fit[b] < fit[a] ? b : a;
    };
    std::vector<WeightVector> next;
    next.reserve(p);
    next.push_back(pop[argmin_first(fit)]);
    while (next.size() < p) {
      const WeightVector& a = pop[tournament()];
      const WeightVector& b = pop[tournament()];
      WeightVector child = a;
      if (rng.uniform() < config.crossover_rate)
        for (std::size_t i = 0; i < kFeatureCount; ++i)
          if (rng.uniform() < 0.5) child.values[i] = b.values[i];
      for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (rng.uniform() < config.mutation_rate)
          child.values[i] = std::clamp(child.values[i] + config.mutation_std * rng.normal(),
                                       config.lower[i], config.upper[i]);
      next.push_back(child);
    }
    pop = std::move(next);
    fit = evaluate(pop);
    record(g);
  }
  return result;
}

TunerResult run_tuner(const TunerConfig& config, const GenerationCallback& on_generation) {
  config.validate();
  FitnessEvaluator evaluator(config.fitness);
  return tune(
      config, [&](const std::vector<WeightVector>& ws) { return evaluator.fitness(ws); },
      on_generation);
}

// ---------------------------------------------------------------------------

void write_weight_file(std::ostream& out, const WeightVector& w, const WeightProvenance& provenance) {
  for (double v : w.values)
    if (!std::isfinite(v)) fail(ErrorKind::contract, "weights must be finite");
  nlohmann::ordered_json prov = nlohmann::ordered_json::object();
  if (provenance.tuner_seed) prov["tuner_seed"] = *provenance.tuner_seed;
  if (provenance.generations) prov["generations"] = *provenance.generations;
  prov["train_ids"] = provenance.train_ids;
  nlohmann::ordered_json doc;
  doc["layout_version"] = std::string(kFeatureLayoutVersion);
  doc["weights"] = w.values;
  doc["provenance"] = prov;
  out << doc.dump(2) << '\n';
}

WeightFile read_weight_file(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("weight file: ") + e.what());
  }
  WeightFile out;
  try {
    const auto version = doc.at("layout_version").get<std::string>();
    if (version != kFeatureLayoutVersion)
      fail(ErrorKind::format, "weight file layout " + version + " does not match " +
                                  std::string(kFeatureLayoutVersion));
    const auto values = doc.at("weights").get<std::vector<double>>();
    if (values.size() != kFeatureCount)
      fail(ErrorKind::format, "weight file has " + std::to_string(values.size()) + " weights, expected " +
                                  std::to_string(kFeatureCount));
    std::copy(values.begin(), values.end(), out.weights.values.begin());
    if (doc.contains("provenance")) {
      const auto& p = doc["provenance"];
      if (p.contains("tuner_seed")) out.provenance.tuner_seed = p["tuner_seed"].get<std::uint64_t>();
      if (p.contains("generations")) out.provenance.generations = p["generations"].get<std::size_t>();
      if (p.contains("train_ids")) out.provenance.train_ids = p["train_ids"].get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("weight file: ") + e.what());
  }
  return out;
}

void save_weight_file(const std::string& path, const WeightVector& w,
                      const WeightProvenance& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  write_weight_file(out, w, provenance);
  if (!out) fail(ErrorKind::io, "failed writing " + path);
}

WeightFile load_weight_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open weight file " + path);
  return read_weight_file(in);
}

}  // namespace fewshot
