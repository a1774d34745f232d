#include "voxdistill/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "voxdistill/parallel.hpp"

namespace voxdistill {

namespace {

constexpr std::uint64_t kMutationStream = 0x6d757461ULL;
constexpr std::uint64_t kEvalStream = 0x6576616cULL;

// Scores every individual: mean over reps per body, min over bodies. Bodies
// are `fixed` when given, otherwise each individual's own grid. The
// per-body seed is derive_seed(seeds[i], body) so a lone evaluate() call
// with that seed reproduces the number.
void score(std::span<Individual> inds, std::span<const std::uint64_t> seeds, const std::vector<MorphologyGrid>* fixed,
           const EvalSettings& eval) {
  const std::size_t bodies = fixed != nullptr ? fixed->size() : 1;
  const auto reps = static_cast<std::size_t>(eval.reps);
  std::vector<double> raw(inds.size() * bodies * reps);
  parallel_for(raw.size(), eval.workers, [&](std::size_t task) {
    const std::size_t i = task / (bodies * reps);
    const std::size_t b = (task / reps) % bodies;
    const std::size_t r = task % reps;
    const MorphologyGrid& grid = fixed != nullptr ? (*fixed)[b] : inds[i].grid;
    const NoiseConfig noise{eval.obs_noise_std, eval.act_noise_std, derive_seed(seeds[i], b, r)};
    raw[task] = run_episode(grid, inds[i].controller, eval.world, noise).fitness;
  });
  for (std::size_t i = 0; i < inds.size(); ++i) {
    Individual& ind = inds[i];
    ind.per_morphology.assign(bodies, 0.0);
    for (std::size_t b = 0; b < bodies; ++b) {
      double sum = 0.0;
      for (std::size_t r = 0; r < reps; ++r) sum += raw[(i * bodies + b) * reps + r];
      ind.per_morphology[b] = sum / static_cast<double>(reps);
    }
    ind.fitness = *std::min_element(ind.per_morphology.begin(), ind.per_morphology.end());
  }
}

bool better(const Individual& a, const Individual& b) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  return a.id < b.id;
}

}  // namespace

void AfpoConfig::validate() const {
  if (pop_size < 2) throw ConfigError("AFPO population size must be at least 2");
  if (generations < 0) throw ConfigError("AFPO generations must be non-negative");
  if (!(param_mutation_std >= 0.0)) throw ConfigError("mutation std must be non-negative");
}

std::vector<Individual> afpo_select(std::vector<Individual> pool, int keep) {
  const std::size_t n = pool.size();
  std::vector<int> dominated_by(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Individual& a = pool[j];
      const Individual& b = pool[i];
      const bool no_worse = a.age <= b.age && a.fitness >= b.fitness;
      const bool strictly = a.age < b.age || a.fitness > b.fitness;
      if (no_worse && strictly) ++dominated_by[i];
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (dominated_by[x] != dominated_by[y]) return dominated_by[x] < dominated_by[y];
    if (pool[x].fitness != pool[y].fitness) return pool[x].fitness > pool[y].fitness;
    if (pool[x].age != pool[y].age) return pool[x].age < pool[y].age;
    return pool[x].id < pool[y].id;
  });
  std::vector<Individual> out;
  const std::size_t k = std::min(n, static_cast<std::size_t>(std::max(keep, 0)));
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(std::move(pool[order[i]]));
  return out;
}

AfpoResult afpo_run(const AfpoConfig& config, const std::vector<MorphologyGrid>& morphologies,
                    const EvalSettings& eval, std::uint64_t seed, const ControllerSpec* warm_start,
                    const AfpoCallback& on_generation) {
  config.validate();
  if (morphologies.empty()) throw ConfigError("AFPO needs at least one morphology");
  if (config.fitness_mode == FitnessMode::Single && morphologies.size() != 1) {
    throw ConfigError("single-morphology AFPO takes exactly one morphology");
  }
  for (const MorphologyGrid& g : morphologies) {
    if (!is_connected(g)) throw DisconnectedMorphology("AFPO morphology is empty or disconnected");
  }
  if (warm_start != nullptr) validate(*warm_start);
  const ControllerSpec templ = warm_start != nullptr ? *warm_start : zero_controller(config.arch, config.hyper);

  std::uint64_t next_id = 1;
  auto fresh = [&](Rng& rng) {
    Individual ind;
    ind.grid = morphologies.front();
    ind.controller = random_controller(templ.arch, templ.hyper, rng);
    ind.id = next_id++;
    return ind;
  };

  AfpoResult result;
  std::vector<Individual> population;
  {
    Rng rng(derive_seed(seed, 0, kMutationStream));
    for (int i = 0; i < config.pop_size; ++i) {
      if (warm_start != nullptr) {
        Individual ind;
        ind.grid = morphologies.front();
        ind.controller = *warm_start;
        ind.id = next_id++;
        population.push_back(std::move(ind));
      } else {
        population.push_back(fresh(rng));
      }
    }
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < population.size(); ++i) seeds.push_back(derive_seed(seed, 0, kEvalStream + i));
    score(population, seeds, &morphologies, eval);
    result.champion = *std::min_element(population.begin(), population.end(), better);
    result.trajectory.push_back(result.champion.fitness);
    if (on_generation) on_generation(0, population);
  }

  for (int gen = 1; gen <= config.generations; ++gen) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(gen), kMutationStream));
    for (Individual& ind : population) ++ind.age;

    std::vector<Individual> fresh_batch;
    for (const Individual& parent : population) {
      Individual child;
      child.grid = parent.grid;
      child.controller = mutate_params(parent.controller, rng, config.param_mutation_std);
      child.age = parent.age;
      child.id = next_id++;
      child.parent_id = parent.id;
      fresh_batch.push_back(std::move(child));
    }
    fresh_batch.push_back(fresh(rng));

    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < fresh_batch.size(); ++i) {
      seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(gen), kEvalStream + i));
    }
    score(fresh_batch, seeds, &morphologies, eval);
    for (const Individual& ind : fresh_batch) {
      if (ind.fitness > result.champion.fitness) result.champion = ind;
    }
    result.trajectory.push_back(result.champion.fitness);

    for (Individual& ind : fresh_batch) population.push_back(std::move(ind));
    population = afpo_select(std::move(population), config.pop_size);
    if (on_generation) on_generation(gen, population);
  }
  return result;
}

int cell_index(const Descriptor& d) {
  if (d.n_voxels < 1 || d.n_voxels > kSlots || d.n_active < 0 || d.n_active > d.n_voxels) {
    throw ConfigError("descriptor outside the archive bounds");
  }
  return (d.n_voxels - 1) * kActiveBins + d.n_active;
}

Descriptor cell_descriptor(int cell) {
  if (cell < 0 || cell >= kArchiveCells) throw ConfigError("archive cell index out of range");
  return {cell / kActiveBins + 1, cell % kActiveBins};
}

void MapElitesConfig::validate() const {
  if (generations < 1) throw ConfigError("MAP-Elites needs at least one generation");
  if (batch < 1) throw ConfigError("MAP-Elites batch must be positive");
  if (initial < 1) throw ConfigError("MAP-Elites initial population must be positive");
  if (!(morph_mutation_rate > 0.0 && morph_mutation_rate <= 1.0)) {
    throw ConfigError("morphology mutation rate must lie in (0, 1]");
  }
  if (!(param_mutation_std >= 0.0)) throw ConfigError("mutation std must be non-negative");
}

bool EliteArchive::try_insert(const Individual& ind) {
  const int cell = cell_index(descriptor(ind.grid));
  auto it = cells.find(cell);
  if (it == cells.end()) {
    cells.emplace(cell, ind);
    return true;
  }
  if (ind.fitness > it->second.fitness) {
    it->second = ind;
    return true;
  }
  return false;
}

const Individual& EliteArchive::best() const {
  if (cells.empty()) throw EmptyArchive("archive has no occupants");
  const Individual* top = nullptr;
  for (const auto& [cell, ind] : cells) {
    if (top == nullptr || ind.fitness > top->fitness) top = &ind;
  }
  return *top;
}

bool EliteArchive::contains_grid(const MorphologyGrid& grid) const {
  if (!is_connected(grid)) return false;
  auto it = cells.find(cell_index(descriptor(grid)));
  return it != cells.end() && it->second.grid == grid;
}

double EliteArchive::qd_score() const {
  double s = 0.0;
  for (const auto& [cell, ind] : cells) s += ind.fitness;
  return s;
}

EliteArchive map_elites_run(const MapElitesConfig& config, const EvalSettings& eval, std::uint64_t seed,
                            const EliteArchive* resume, const MapElitesCallback& on_generation) {
  config.validate();
  EliteArchive archive;
  if (resume != nullptr) {
    archive = *resume;
    if (archive.seed != seed) throw ConfigError("resumed archive was produced with a different seed");
  } else {
    archive.seed = seed;
  }

  auto log_generation = [&](int gen, int insertions) {
    GenerationLog entry;
    entry.generation = gen;
    entry.occupancy = archive.occupancy();
    entry.best = archive.best().fitness;
    entry.qd_score = archive.qd_score();
    entry.migrations = archive.migrations;
    entry.insertions = insertions;
    archive.generation = gen;
    archive.log.push_back(entry);
    if (on_generation) on_generation(archive, entry);
  };

  if (archive.generation < 0) {
    Rng rng(derive_seed(seed, 0, kMutationStream));
    std::vector<Individual> batch;
    for (int i = 0; i < config.initial; ++i) {
      Individual ind;
      ind.grid = random_morphology(rng);
      ind.controller = random_controller(config.arch, config.hyper, rng);
      ind.id = archive.next_id++;
      batch.push_back(std::move(ind));
    }
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < batch.size(); ++i) seeds.push_back(derive_seed(seed, 0, kEvalStream + i));
    score(batch, seeds, nullptr, eval);
    int insertions = 0;
    for (const Individual& ind : batch) insertions += archive.try_insert(ind) ? 1 : 0;
    log_generation(0, insertions);
  }

  std::vector<int> occupied;
  for (int gen = archive.generation + 1; gen <= config.generations; ++gen) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(gen), kMutationStream));
    occupied.clear();
    for (const auto& [cell, ind] : archive.cells) occupied.push_back(cell);
    std::uniform_int_distribution<std::size_t> pick(0, occupied.size() - 1);
    std::bernoulli_distribution coin(0.5);

    std::vector<Individual> batch;
    std::vector<int> parent_cell;
    for (int i = 0; i < config.batch; ++i) {
      const int cell = occupied[pick(rng)];
      const Individual& parent = archive.cells.at(cell);
      Individual child;
      child.grid = parent.grid;
      child.controller = parent.controller;
      if (coin(rng)) {
        child.grid = mutate_morphology(parent.grid, rng, config.morph_mutation_rate).grid;
      } else {
        child.controller = mutate_params(parent.controller, rng, config.param_mutation_std);
      }
      child.age = parent.age + 1;
      child.id = archive.next_id++;
      child.parent_id = parent.id;
      batch.push_back(std::move(child));
      parent_cell.push_back(cell);
    }
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      seeds.push_back(derive_seed(seed, static_cast<std::uint64_t>(gen), kEvalStream + i));
    }
    score(batch, seeds, nullptr, eval);

    int insertions = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!archive.try_insert(batch[i])) continue;
      ++insertions;
      if (cell_index(descriptor(batch[i].grid)) != parent_cell[i]) ++archive.migrations;
    }
    log_generation(gen, insertions);
  }
  return archive;
}

std::vector<Individual> select_teachers_topk(const EliteArchive& archive, double fraction) {
  if (archive.cells.empty()) throw EmptyArchive("cannot select teachers from an empty archive");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("top-k fraction must lie in (0, 1]");
  std::vector<std::pair<int, const Individual*>> ranked;
  for (const auto& [cell, ind] : archive.cells) ranked.emplace_back(cell, &ind);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second->fitness > b.second->fitness; });
  const double want = fraction * static_cast<double>(ranked.size());
  // guard against 0.1 * 30 = 3.0000000000000004
  auto count = static_cast<std::size_t>(std::ceil(want - 1e-9));
  count = std::clamp<std::size_t>(count, 1, ranked.size());
  std::vector<Individual> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(*ranked[i].second);
  return out;
}

std::vector<Individual> select_teachers_spread(const EliteArchive& archive, int k) {
  if (archive.cells.empty()) throw EmptyArchive("cannot select teachers from an empty archive");
  if (k < 1 || static_cast<std::size_t>(k) > archive.occupancy()) {
    throw ConfigError("spread selection needs 1 <= k <= occupancy");
  }
  std::vector<int> cells;
  for (const auto& [cell, ind] : archive.cells) cells.push_back(cell);
  std::vector<bool> taken(cells.size(), false);
  std::vector<double> nearest(cells.size(), std::numeric_limits<double>::infinity());

  std::size_t first = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (archive.cells.at(cells[i]).fitness > archive.cells.at(cells[first]).fitness) first = i;
  }
  std::vector<Individual> out;
  std::size_t current = first;
  for (int round = 0; round < k; ++round) {
    taken[current] = true;
    out.push_back(archive.cells.at(cells[current]));
    const Descriptor dc = cell_descriptor(cells[current]);
    std::size_t next = cells.size();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (taken[i]) continue;
      const Descriptor di = cell_descriptor(cells[i]);
      const double dx = di.n_voxels - dc.n_voxels;
      const double dy = di.n_active - dc.n_active;
      nearest[i] = std::min(nearest[i], std::sqrt(dx * dx + dy * dy));
      if (next == cells.size() || nearest[i] > nearest[next]) next = i;
    }
    if (next == cells.size()) break;
    current = next;
  }
  return out;
}

std::vector<MorphologyGrid> unseen_path(const EliteArchive& archive, const MorphologyGrid& a,
                                        const MorphologyGrid& b) {
  return interpolate_path(a, b, [&](const MorphologyGrid& g) { return archive.contains_grid(g); });
}

const Individual& closest_occupant(const EliteArchive& archive, const MorphologyGrid& grid) {
  if (archive.cells.empty()) throw EmptyArchive("archive has no occupants");
  const Individual* best = nullptr;
  int best_d = kSlots + 1;
  for (const auto& [cell, ind] : archive.cells) {
    const int d = hamming_distance(grid, ind.grid);
    if (d < best_d) {
      best_d = d;
      best = &ind;
    }
  }
  return *best;
}

}  // namespace voxdistill
