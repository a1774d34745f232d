#include <doctest.h>

#include "voxdistill/config.hpp"

using namespace voxdistill;

TEST_SUITE("config") {
  TEST_CASE("profiles") {
    const RunConfig desk = RunConfig::defaults("desk");
    CHECK(desk.qd.generations == 2000);
    CHECK(desk.train.steps == 10000);
    CHECK(desk.eval.reps == 5);
    CHECK(desk.generalization_reps == 10);
    const RunConfig paper = RunConfig::defaults("paper");
    CHECK(paper.qd.generations == 20000);
    CHECK(paper.train.steps == 100000);
    CHECK(paper.eval.world.terrain.length_voxels == 100);
    CHECK(desk.hash() != paper.hash());
    CHECK_THROWS_AS(RunConfig::defaults("laptop"), ConfigError);
  }

  TEST_CASE("serialisation round trip") {
    RunConfig c = RunConfig::defaults("desk");
    c.set("world.dt", "0.005");
    c.set("student.arch", "global_tx");
    c.set("train.learning_rate", "0.0003");
    c.set("world.terrain", "bridge");
    c.seed = 12345;
    const RunConfig back = parse_config(c.serialize());
    CHECK(back.serialize() == c.serialize());
    CHECK(back.hash() == c.hash());
    CHECK(back.student_arch == Arch::GlobalTx);
    CHECK(back.eval.world.dt == 0.005);
    CHECK(back.eval.world.terrain.kind == TerrainKind::Bridge);
    for (const std::string& k : c.keys()) CHECK(back.get(k) == c.get(k));
  }

  TEST_CASE("hash ignores the worker count and the generation target") {
    RunConfig a = RunConfig::defaults("desk");
    RunConfig b = a;
    b.eval.workers = a.eval.workers + 7;
    b.set("qd.generations", "50");
    CHECK(a.hash() == b.hash());
    b.set("qd.batch", "8");
    CHECK(a.hash() != b.hash());
    RunConfig c = a;
    c.seed = 1;
    CHECK(a.hash() != c.hash());
  }

  TEST_CASE("architecture keys reach the evolution settings") {
    RunConfig c = RunConfig::defaults("desk");
    c.set("controller.arch", "modular_fc");
    c.set("controller.hidden", "16");
    CHECK(c.qd.arch == Arch::ModularFC);
    CHECK(c.afpo.arch == Arch::ModularFC);
    CHECK(c.qd.hyper.hidden == 16);
  }

  TEST_CASE("bad input") {
    RunConfig c = RunConfig::defaults("desk");
    CHECK_THROWS_AS(c.set("no.such.key", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("eval.reps", "five"), ConfigError);
    CHECK_THROWS_AS(c.set("world.dt", "0.01x"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = 3\nprofile = paper\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
    c.set("eval.reps", "0");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    const RunConfig p = parse_config("# comment\nprofile = paper\nseed = 4  # trailing\n\n");
    CHECK(p.profile == "paper");
    CHECK(p.seed == 4);
  }
}
