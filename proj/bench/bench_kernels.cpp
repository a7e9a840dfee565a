// Wall-clock comparison of the OpenMP kernels against their serial references.
// Usage: bench_kernels [data_dir] [repeats]

#include "switchsynth/pipeline.hpp"
#include "switchsynth/sim.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

using namespace switchsynth;

namespace {

double best_of(int repeats, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* kernel, double serial, double parallel, bool same) {
  std::printf("%-20s serial %9.4f s  parallel %9.4f s  speedup %5.2fx  identical %s\n", kernel, serial,
              parallel, serial / parallel, same ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";
  const int repeats = argc > 2 ? std::max(1, std::atoi(argv[2])) : 3;
  std::printf("threads %d, best of %d\n", omp_get_max_threads(), repeats);

  const auto model = load_model(dir + "/sfr_model.json");
  const auto spec = load_fragment(read_text(dir + "/sfr_spec.mtl"), model);

  // Weighting search, every mode.
  ShapeOptions so;
  so.budget = 256;
  std::vector<ModeCertificate> a, b;
  auto shape = [&](bool parallel, std::vector<ModeCertificate>& out) {
    out.clear();
    for (const auto& md : model.modes) {
      const Matrix am = model.certified_A(md.id);
      const Matrix sm = model.certified_Sigma(md.id);
      out.push_back(parallel ? shape_certificate(md.id, am, sm, md.mu, so)
                             : shape_certificate_serial(md.id, am, sm, md.mu, so));
    }
  };
  const double s_shape = best_of(repeats, [&] { shape(false, a); });
  const double p_shape = best_of(repeats, [&] { shape(true, b); });
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].M == b[i].M;
  row("shape_certificate", s_shape, p_shape, same);

  // Monte Carlo ensemble.
  const auto cert = certify(model, {}, &spec);
  const auto run = synthesize(model, cert, spec, {}, {});
  EnsembleInputs in;
  in.model = &model;
  in.grid = &run.grid;
  in.plan = &run.plan;
  in.spec = &spec;
  in.certs = &cert.certs;
  in.tube = &run.tube;
  in.r0 = cert.r0;
  EnsembleConfig cfg;
  cfg.realizations = 500;
  EnsembleReport ra, rb;
  const double s_ens = best_of(repeats, [&] { ra = run_ensemble_serial(in, cfg); });
  const double p_ens = best_of(repeats, [&] { rb = run_ensemble(in, cfg); });
  row("run_ensemble", s_ens, p_ens, dump_json(ensemble_to_json(ra)) == dump_json(ensemble_to_json(rb)));
  return 0;
}
