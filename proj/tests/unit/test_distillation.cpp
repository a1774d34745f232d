#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "../support.hpp"
#include "voxdistill/distillation.hpp"

using namespace voxdistill;
using namespace voxdistill::testing;

namespace {

Individual teacher(const std::string& name, std::uint64_t seed) {
  Rng rng(seed);
  Individual t;
  t.grid = fixture(name);
  t.controller = random_controller(Arch::GlobalFC, Hyper{}, rng);
  return t;
}

WorldConfig short_world() {
  WorldConfig w;
  w.episode_steps = 50;
  return w;
}

DistillDataset tagged(std::uint32_t tag) {
  DistillDataset d;
  MorphologyGrid g;
  g.at(0, 0) = Material::Rigid;
  d.add_morphology(g);
  DistillRecord r;
  r.time_signal = tag;
  d.records.push_back(r);
  return d;
}

std::filesystem::path temp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_SUITE("distillation") {
  TEST_CASE("one teacher and one full episode gives 100 records") {
    const DistillDataset d = collect_dataset({teacher("biped", 1)}, 1, NoiseConfig{0.01, 0.01, 5}, WorldConfig{});
    CHECK(d.size() == 100);
    CHECK(d.index.size() == 1);
    d.check();
    for (std::size_t i = 0; i < d.size(); ++i) {
      for (int s = 0; s < kSlots; ++s) {
        const double a = d.records[i].action.values[s];
        if (d.index[0].occupied(s)) {
          CHECK(a >= kActionMin);
          CHECK(a <= kActionMax);
        }
      }
    }
  }

  TEST_CASE("records scale with teachers, episodes and control queries") {
    const DistillDataset d = collect_dataset({teacher("biped", 1), teacher("worm", 2), teacher("block", 3)}, 2,
                                             NoiseConfig{0.01, 0.01, 6}, short_world(), 2);
    CHECK(d.size() == 3 * 2 * 10);
    CHECK(d.index.size() == 3);
    const DistillDataset again = collect_dataset({teacher("biped", 1), teacher("worm", 2), teacher("block", 3)}, 2,
                                                 NoiseConfig{0.01, 0.01, 6}, short_world(), 1);
    REQUIRE(again.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(again.frame(i) == d.frame(i));
      CHECK(again.records[i].action == d.records[i].action);
    }
  }

  TEST_CASE("compact records expand back to the frame") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const MorphologyGrid g = random_morphology(rng);
      const ObservationFrame obs = random_frame(g, rng);
      ActionVector act;
      act.values.fill(1.2);
      const DistillRecord r = compress(0, obs, act);
      CHECK(expand(r, g) == obs);
    }
  }

  TEST_CASE("dataset file round trip and version check") {
    const DistillDataset d = collect_dataset({teacher("triped", 4), teacher("worm", 5)}, 1, NoiseConfig{0.01, 0.01, 7},
                                             short_world());
    const auto path = temp("voxdistill_dataset_test.bin");
    save_dataset(path.string(), d, 77);
    std::uint64_t hash = 0;
    const DistillDataset back = load_dataset(path.string(), &hash);
    CHECK(hash == 77);
    REQUIRE(back.size() == d.size());
    CHECK(back.index == d.index);
    const DatasetFile file(path.string());
    REQUIRE(file.size() == d.size());
    CHECK(file.config_hash() == 77);
    for (std::size_t i = 0; i < d.size(); ++i) {
      DistillRecord r;
      file.read(i, r);
      CHECK(expand(r, file.morphologies()[r.morphology_id]) == d.frame(i));
      CHECK(r.action == d.records[i].action);
      CHECK(back.frame(i) == d.frame(i));
    }

    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::string bumped = bytes;
    bumped[4] = static_cast<char>(kDatasetVersion + 1);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << bumped;
    }
    CHECK_THROWS_AS(load_dataset(path.string()), FormatError);
    CHECK_THROWS_AS(DatasetFile(path.string()), FormatError);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << bytes.substr(0, bytes.size() - 10);
    }
    CHECK_THROWS_AS(DatasetFile(path.string()), FormatError);
    std::filesystem::remove(path);

    std::ostringstream csv;
    export_csv(csv, d, 3);
    int lines = 0;
    for (char c : csv.str()) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 4);
  }

  TEST_CASE("champion combinations") {
    CHECK(champion_combinations({3, 3, 3, 3}).size() == 81);
    CHECK(champion_combinations({1}).size() == 1);
    const auto two = champion_combinations({2, 2});
    CHECK(two.size() == 4);
    CHECK(std::set<std::vector<std::size_t>>(two.begin(), two.end()).size() == 4);
    CHECK(two.front() == std::vector<std::size_t>{0, 0});
    CHECK(two[1] == std::vector<std::size_t>{0, 1});

    std::vector<std::vector<DistillDataset>> per(4);
    for (std::uint32_t m = 0; m < 4; ++m) {
      for (std::uint32_t r = 0; r < 3; ++r) per[m].push_back(tagged(10 * m + r));
    }
    const auto combos = combo_datasets(per);
    REQUIRE(combos.size() == 81);
    std::set<std::vector<double>> distinct;
    for (const DistillDataset& d : combos) {
      REQUIRE(d.size() == 4);
      std::vector<double> tags;
      for (const DistillRecord& r : d.records) tags.push_back(r.time_signal);
      distinct.insert(tags);
    }
    CHECK(distinct.size() == 81);
    CHECK(combo_datasets({{tagged(1)}}).size() == 1);
  }

  TEST_CASE("gradient of a one-parameter linear least squares model") {
    // loss(w) = mean (w x - t)^2, dloss/dw = 2 mean x (w x - t)
    const std::vector<double> x{0.3, -1.2, 2.5, 0.7};
    const std::vector<double> t{1.0, 0.1, -0.4, 2.2};
    const auto loss = [&](double w) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += (w * x[i] - t[i]) * (w * x[i] - t[i]);
      return s / x.size();
    };
    const double w = 0.37;
    double analytic = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) analytic += 2.0 * x[i] * (w * x[i] - t[i]);
    analytic /= x.size();
    const double h = 1e-5;
    const double numeric = (loss(w + h) - loss(w - h)) / (2.0 * h);
    CHECK(std::abs(analytic - numeric) / std::abs(analytic) < 1e-5);

    // the same check through the network code, moving a single output bias
    Rng rng(2);
    const ControllerSpec spec = random_controller(Arch::GlobalFC, Hyper{}, rng);
    const MorphologyGrid g = fixture("biped");
    const ObservationFrame obs = random_frame(g, rng);
    ActionVector target;
    for (int s = 0; s < kSlots; ++s) target.values[s] = g.occupied(s) ? 1.3 : 0.0;
    int slot = 0;
    while (!g.occupied(slot)) ++slot;
    const std::size_t bias = spec.params.size() - kSlots + static_cast<std::size_t>(slot);
    CHECK(gradient_error(spec, obs, target, {bias}) < 1e-5);
  }

  TEST_CASE("Adam follows the bias-corrected update") {
    const std::vector<double> grads{0.5, -1.0, 0.25, 2.0, -0.75, 0.0, 1.5};
    const double lr = 0.01;
    const double b1 = 0.9;
    const double b2 = 0.999;
    const double eps = 1e-8;
    Adam adam(1, lr, b1, b2, eps);
    std::vector<double> p{0.2};
    double want = 0.2;
    double m = 0.0;
    double v = 0.0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      const double g = grads[t - 1];
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
      want -= lr * mh / (std::sqrt(vh) + eps);
      adam.step(p, std::vector<double>{g});
      CHECK(std::abs(p[0] - want) < 1e-12);
    }
    CHECK(adam.steps_taken() == 7);
  }

  TEST_CASE("a single record is memorised") {
    DistillDataset d;
    const MorphologyGrid g = fixture("worm");
    d.add_morphology(g);
    Rng rng(4);
    ActionVector act;
    std::uniform_real_distribution<double> u(0.7, 1.5);
    for (int s = 0; s < kSlots; ++s) act.values[s] = g.occupied(s) ? u(rng) : 0.0;
    d.records.push_back(compress(0, random_frame(g, rng), act));
    TrainConfig c;
    c.steps = 2000;
    c.batch_size = 4;
    c.log_every = 100;
    c.seed = 1;
    for (Arch a : {Arch::GlobalFC, Arch::ModularFC, Arch::GlobalTx}) {
      CAPTURE(arch_name(a));
      const TrainResult r = train_student(d, a, Hyper{}, c);
      REQUIRE(r.loss_curve.size() == 20);
      CHECK(r.loss_curve.back() < 1e-3 * r.loss_curve.front());
      CHECK(squared_error(r.student, d.frame(0), act) < 1e-4);
    }
  }

  TEST_CASE("training is bit reproducible and keeps outputs in range") {
    const DistillDataset d = collect_dataset({teacher("block", 8)}, 1, NoiseConfig{0.01, 0.01, 3}, short_world());
    TrainConfig c;
    c.steps = 200;
    c.batch_size = 16;
    c.log_every = 20;
    c.seed = 9;
    const TrainResult a = train_student(d, Arch::GlobalFC, Hyper{}, c);
    const TrainResult b = train_student(d, Arch::GlobalFC, Hyper{}, c);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.student == b.student);
    const ActionVector out = forward(a.student, d.frame(0));
    for (int s = 0; s < kSlots; ++s) {
      if (d.index[0].occupied(s)) {
        CHECK(out.values[s] >= kActionMin);
        CHECK(out.values[s] <= kActionMax);
      }
    }
  }

  TEST_CASE("empty datasets and bad configs are rejected") {
    TrainConfig c;
    c.steps = 10;
    CHECK_THROWS_AS(train_student(DistillDataset{}, Arch::GlobalFC, Hyper{}, c), EmptyDataset);
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
