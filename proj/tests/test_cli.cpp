#include "switchsynth/cli.hpp"
#include "switchsynth/io.hpp"
#include "switchsynth/model.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

using namespace switchsynth;
namespace fs = std::filesystem;

namespace {

std::string data(const std::string& name) { return std::string(SWITCHSYNTH_DATA_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(SWITCHSYNTH_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code = 0;
  std::string out;
  std::string err;
  Json error() const { return parse_json(err, "stderr")["error"]; }
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string s(const fs::path& p) { return p.string(); }

// certify + synthesize on the shipped frequency-response fixture.
fs::path sfr_run(const std::string& name, const std::string& objective = "l2") {
  const fs::path dir = scratch(name);
  REQUIRE(cli({"certify", "--model", data("sfr_model.json"), "--spec", data("sfr_spec.mtl"),
               "--out", s(dir)})
              .code == 0);
  REQUIRE(cli({"synthesize", "--model", data("sfr_model.json"), "--spec", data("sfr_spec.mtl"),
               "--cert", s(dir / "certificate.json"), "--out", s(dir), "--objective", objective})
              .code == 0);
  return dir;
}

}  // namespace

TEST_CASE("exit code table") {
  CHECK(exit_code(ErrorCode::InvalidEpsilon) == 2);
  CHECK(exit_code(ErrorCode::NotInFragment) == 2);
  CHECK(exit_code(ErrorCode::ParseError) == 2);
  CHECK(exit_code(ErrorCode::MissingArtifact) == 2);
  CHECK(exit_code(ErrorCode::Usage) == 2);
  CHECK(exit_code(ErrorCode::StepMisaligned) == 2);
  CHECK(exit_code(ErrorCode::Infeasible) == 3);
  CHECK(exit_code(ErrorCode::NotHurwitz) == 3);
  CHECK(exit_code(ErrorCode::IllConditioned) == 4);
  CHECK(exit_code(ErrorCode::NonFinite) == 4);
  CHECK(exit_code(ErrorCode::IterationLimit) == 4);
  CHECK(exit_code(ErrorCode::SingularAlgebraicBlock) == 4);
}

TEST_CASE("cli certify") {
  const fs::path a = scratch("certify_a"), b = scratch("certify_b");
  const auto ra = cli({"certify", "--model", data("sfr_model.json"), "--out", s(a)});
  REQUIRE(ra.code == 0);
  CHECK(ra.out.find("probability bound") != std::string::npos);
  REQUIRE(cli({"certify", "--model", data("sfr_model.json"), "--out", s(b)}).code == 0);
  CHECK(read_text(s(a / "certificate.json")) == read_text(s(b / "certificate.json")));
  const Json m = parse_json(read_text(s(a / "manifest.certify.json")), "manifest");
  CHECK(m["version"] == kToolVersion);
  CHECK(m["inputs"]["model"]["fnv1a64"].get<std::string>().size() == 16);
  CHECK(m["parameters"]["epsilon"] == 0.05);
  CHECK(m["parameters"]["modes"].size() == 2);
  CHECK(m["timings_s"].contains("certify"));

  SUBCASE("invalid epsilon") {
    const auto r = cli({"certify", "--model", data("sfr_model.json"), "--out", s(a), "--epsilon", "1.5"});
    CHECK(r.code == 2);
    CHECK(r.error()["code"] == "InvalidEpsilon");
    CHECK(r.error()["exit_code"] == 2);
  }
  SUBCASE("unstable mode") {
    const fs::path lit = scratch("literal");
    const auto gen = cli({"sfr-model", "--droop", "literal", "--out", s(lit / "m.json")});
    REQUIRE(gen.code == 0);
    CHECK(gen.out.find("warning") != std::string::npos);
    const auto r = cli({"certify", "--model", s(lit / "m.json"), "--out", s(lit)});
    CHECK(r.code == 3);
    CHECK(r.error()["code"] == "NotHurwitz");
  }
  SUBCASE("ill-conditioned Lyapunov equation") {
    auto toy = fixture::toy_model();
    for (auto& md : toy.modes) {
      md.A = Matrix::Zero(2, 2);
      md.A(0, 0) = -1e-9;
      md.A(1, 1) = -1e9;
    }
    const fs::path dir = scratch("illcond");
    write_text(s(dir / "m.json"), model_to_json_text(toy));
    const auto r = cli({"certify", "--model", s(dir / "m.json"), "--out", s(dir), "--mu", "1e-12"});
    CHECK(r.code == 4);
  }
  SUBCASE("missing and malformed input") {
    CHECK(cli({"certify", "--model", s(a / "nope.json"), "--out", s(a)}).code == 2);
    write_text(s(a / "bad.json"), "{\"states\": 3}");
    const auto r = cli({"certify", "--model", s(a / "bad.json"), "--out", s(a)});
    CHECK(r.code == 2);
    CHECK(r.error()["code"] == "SchemaError");
  }
}

TEST_CASE("cli synthesize") {
  const fs::path dir = sfr_run("synth_l2");
  for (const char* f : {"plan.csv", "solver_log.json", "synthesis.json", "nominal.csv",
                        "manifest.synthesize.json"})
    CHECK(fs::exists(dir / f));
  const Json syn = parse_json(read_text(s(dir / "synthesis.json")), "synthesis");
  CHECK(syn["nominal_robustness_tightened"].get<double>() >= 0.0);

  SUBCASE("l1 and l2 plans differ and are both feasible") {
    const fs::path d1 = sfr_run("synth_l1", "l1");
    const Json s1 = parse_json(read_text(s(d1 / "synthesis.json")), "synthesis");
    CHECK(s1["nominal_robustness_tightened"].get<double>() >= 0.0);
    CHECK(read_text(s(d1 / "plan.csv")) != read_text(s(dir / "plan.csv")));
  }
  SUBCASE("Until is outside the fragment") {
    write_text(s(dir / "until.mtl"), "(df < 0.5) until[0,10] (df > 0.1)");
    const auto r = cli({"synthesize", "--model", data("sfr_model.json"), "--spec",
                        s(dir / "until.mtl"), "--cert", s(dir / "certificate.json"), "--out", s(dir)});
    CHECK(r.code == 2);
    CHECK(r.error()["code"] == "NotInFragment");
  }
  SUBCASE("infeasible specification") {
    const fs::path bad = scratch("synth_infeasible");
    write_text(s(bad / "tight.mtl"), "always[0,10] (df < 0.01 & df > -0.01)");
    const auto r = cli({"synthesize", "--model", data("sfr_model.json"), "--spec",
                        s(bad / "tight.mtl"), "--cert", s(dir / "certificate.json"), "--out", s(bad)});
    CHECK(r.code == 3);
    CHECK(r.error()["code"] == "Infeasible");
    CHECK(r.error()["certificate_verified"] == true);
    CHECK(fs::exists(bad / "infeasibility.json"));
  }
  SUBCASE("certificate of another model") {
    const fs::path other = scratch("synth_other");
    REQUIRE(cli({"certify", "--model", data("wtg_model.json"), "--out", s(other)}).code == 0);
    const auto r = cli({"synthesize", "--model", data("sfr_model.json"), "--spec",
                        data("sfr_spec.mtl"), "--cert", s(other / "certificate.json"), "--out", s(other)});
    CHECK(r.code == 2);
    CHECK(r.error()["code"] == "InvariantViolation");
  }
  SUBCASE("misaligned step") {
    const auto r = cli({"synthesize", "--model", data("sfr_model.json"), "--spec", data("sfr_spec.mtl"),
                        "--cert", s(dir / "certificate.json"), "--out", s(dir), "--step", "0.07"});
    CHECK(r.code == 2);
    CHECK(r.error()["code"] == "StepMisaligned");
  }
}

TEST_CASE("cli validate, report and replay") {
  const fs::path dir = sfr_run("full");
  const std::vector<std::string> base{"validate", "--model", data("sfr_model.json"), "--spec",
                                      data("sfr_spec.mtl"), "--plan", s(dir / "plan.csv"),
                                      "--seed", "11", "--realizations", "100"};
  auto with_out = [&](const fs::path& out) {
    auto v = base;
    v.insert(v.end(), {"--out", s(out)});
    return v;
  };
  const auto r = cli(with_out(dir));
  CHECK(r.code == 0);
  const Json ens = parse_json(read_text(s(dir / "ensemble.json")), "ensemble");
  CHECK(ens["acceptance"]["passed"] == true);
  CHECK(ens["empirical_rate"].get<double>() >= 0.95 - 2.0 * std::sqrt(0.95 * 0.05 / 100));
  const std::string plot = read_text(s(dir / "plot.csv"));
  CHECK(plot.rfind("time,realization,channel,value\n", 0) == 0);
  CHECK(plot.find("\n0,-1,df,") != std::string::npos);
  CHECK(plot.find(",99,u_s,") != std::string::npos);

  SUBCASE("fixed seed reproduces the report") {
    const fs::path again = scratch("full_again");
    REQUIRE(cli(with_out(again)).code == 0);
    CHECK(read_text(s(again / "ensemble.json")) == read_text(s(dir / "ensemble.json")));
    CHECK(read_text(s(again / "plot.csv")) == read_text(s(dir / "plot.csv")));
  }
  SUBCASE("thread count does not change the output") {
    const fs::path one = scratch("full_one_thread");
    setenv("SWITCHSYNTH_THREADS", "1", 1);
    const auto r1 = cli(with_out(one));
    unsetenv("SWITCHSYNTH_THREADS");
    REQUIRE(r1.code == 0);
    CHECK(read_text(s(one / "ensemble.json")) == read_text(s(dir / "ensemble.json")));
    setenv("SWITCHSYNTH_THREADS", "zero", 1);
    CHECK(cli(with_out(one)).code == 2);
    unsetenv("SWITCHSYNTH_THREADS");
  }
  SUBCASE("usage errors") {
    auto zero = with_out(dir);
    zero.insert(zero.end(), {"--realizations", "0"});
    const auto z = cli(zero);
    CHECK(z.code == 2);
    CHECK(z.error()["code"] == "Usage");
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"--help"}).code == 0);
  }
  SUBCASE("trace dump") {
    const fs::path tr = scratch("full_traces");
    auto v = with_out(tr);
    v.insert(v.end(), {"--plot-realizations", "3", "--dump-traces"});
    REQUIRE(cli(v).code == 0);
    CHECK(read_text(s(tr / "traces" / "index.csv")) ==
          "realization,file\n0,realization_00000.csv\n1,realization_00001.csv\n2,realization_00002.csv\n");
    CHECK(fs::exists(tr / "traces" / "realization_00002.csv"));
  }
  SUBCASE("report") {
    const auto rep = cli({"report", "--run-dir", s(dir)});
    REQUIRE(rep.code == 0);
    for (const char* needle : {"gamma_hat", "epsilon", "empirical rate", "worst margin", "PASS"})
      CHECK_MESSAGE(rep.out.find(needle) != std::string::npos, needle);
    const std::string first = read_text(s(dir / "report.md"));
    REQUIRE(cli({"report", "--run-dir", s(dir)}).code == 0);
    CHECK(read_text(s(dir / "report.md")) == first);
    const Json rj = parse_json(read_text(s(dir / "report.json")), "report");
    CHECK(rj["bound_comparison"]["passed"] == true);
    CHECK(rj["tightening"]["segments"].size() == 3);
    CHECK(rj["plan"]["noise_feedthrough_excluded"] == false);

    const fs::path empty = scratch("empty_run");
    const auto e = cli({"report", "--run-dir", s(empty)});
    CHECK(e.code == 2);
    CHECK(e.error()["code"] == "MissingArtifact");
  }
  SUBCASE("replay") {
    for (const char* cmd : {"certify", "synthesize", "validate"}) {
      const fs::path out = scratch(std::string("replay_") + cmd);
      const auto rp = cli({"replay", "--manifest", s(dir / ("manifest." + std::string(cmd) + ".json")),
                           "--out", s(out)});
      CHECK_MESSAGE(rp.code == 0, cmd, rp.out, rp.err);
    }
    // A changed input is refused.
    const fs::path copy = scratch("replay_changed");
    write_text(s(copy / "spec.mtl"), read_text(data("sfr_spec.mtl")));
    REQUIRE(cli({"certify", "--model", data("sfr_model.json"), "--spec", s(copy / "spec.mtl"),
                 "--out", s(copy)})
                .code == 0);
    write_text(s(copy / "spec.mtl"), "always[0,10] (df < 0.3 & df > -0.3)");
    const auto rp = cli({"replay", "--manifest", s(copy / "manifest.certify.json"), "--out",
                         s(scratch("replay_changed_out"))});
    CHECK(rp.code == 2);
    CHECK(rp.error()["code"] == "InvariantViolation");
  }
  SUBCASE("plan on a foreign grid") {
    const fs::path bad = scratch("foreign_grid");
    std::string csv = "time,u_s\n";
    for (int j = 0; j < 7; ++j) csv += std::to_string(j * 0.07) + ",0\n";
    write_text(s(bad / "plan.csv"), csv);
    const auto v = cli({"validate", "--model", data("sfr_model.json"), "--spec", data("sfr_spec.mtl"),
                        "--plan", s(bad / "plan.csv"), "--cert", s(dir / "certificate.json"),
                        "--out", s(bad)});
    CHECK(v.code == 2);
    CHECK(v.error()["code"] == "StepMisaligned");
  }
}

TEST_CASE("report flags an excluded noise feedthrough") {
  const fs::path dir = scratch("feedthrough");
  auto model = load_model(data("sfr_model.json"));
  model.noise_feedthrough = Matrix::Constant(static_cast<Eigen::Index>(model.outputs.size()), model.m(), 0.01);
  save_model(model, s(dir / "model.json"));
  const std::string mp = s(dir / "model.json");
  REQUIRE(cli({"certify", "--model", mp, "--spec", data("sfr_spec.mtl"), "--out", s(dir)}).code == 0);
  REQUIRE(cli({"synthesize", "--model", mp, "--spec", data("sfr_spec.mtl"), "--cert",
               s(dir / "certificate.json"), "--out", s(dir)})
              .code == 0);
  REQUIRE(cli({"validate", "--model", mp, "--spec", data("sfr_spec.mtl"), "--plan", s(dir / "plan.csv"),
               "--realizations", "20", "--out", s(dir)})
              .code == 0);
  const auto rep = cli({"report", "--run-dir", s(dir)});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("noise feedthrough") != std::string::npos);
  const Json rj = parse_json(read_text(s(dir / "report.json")), "report");
  CHECK(rj["plan"]["noise_feedthrough_excluded"] == true);
}

TEST_CASE("cli fixtures match the shipped data") {
  const fs::path dir = scratch("fixtures");
  REQUIRE(cli({"sfr-model", "--out", s(dir / "sfr.json")}).code == 0);
  REQUIRE(cli({"wtg-fixture", "--out", s(dir / "wtg.json")}).code == 0);
  CHECK(read_text(s(dir / "sfr.json")) == read_text(data("sfr_model.json")));
  CHECK(read_text(s(dir / "wtg.json")) == read_text(data("wtg_model.json")));
  const auto rp = cli({"replay", "--manifest", s(dir / "sfr.json.manifest.json"), "--out",
                       s(scratch("fixtures_replay"))});
  CHECK(rp.code == 0);
}
