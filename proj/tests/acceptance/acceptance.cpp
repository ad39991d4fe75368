//
// Copyright 2026 The Percept Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Acceptance checks, one PASS/FAIL line each.
//
//   acceptance                 run every check
//   acceptance --only NAME     run one check
//   acceptance --list          print check names
//
// Exit status is 0 only when every check that ran passed.

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles/brute_pr.hpp"
#include "oracles/conv2d.hpp"
#include "oracles/jacobi.hpp"
#include "oracles/synth.hpp"
#include "percept/percept.hpp"
#include "tmpdir.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Check {
  const char* name;
  std::function<Outcome()> run;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

oracle::Mat to_mat(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    }
  }
  return out;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd normal_vector(int d, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = nd(rng);
  return v;
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return (m + m.transpose()) * 0.5; }

// ---------------------------------------------------------------------------

Outcome analytic_fd() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> sd(0.05, 3.0);
  const int dims[] = {1, 2, 16, 256};
  double worst = 0.0;
  for (int pair = 0; pair < 50; ++pair) {
    const int d = dims[pair % 4];
    const Eigen::VectorXd m1 = normal_vector(d, rng, 1.0), m2 = normal_vector(d, rng, 1.0);
    Eigen::VectorXd s1(d), s2(d);
    for (int i = 0; i < d; ++i) {
      s1(i) = sd(rng);
      s2(i) = sd(rng);
    }
    double want = 0.0;
    for (int i = 0; i < d; ++i) {
      want += (m1(i) - m2(i)) * (m1(i) - m2(i)) + (s1(i) - s2(i)) * (s1(i) - s2(i));
    }
    const Eigen::MatrixXd c1 = s1.cwiseAbs2().asDiagonal(), c2 = s2.cwiseAbs2().asDiagonal();
    const double got =
        percept::frechet_distance(synth::summary(m1, c1), synth::summary(m2, c2)).total;
    worst = std::max(worst, rel_err(got, want));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 5.0,
          fmt("50 diagonal pairs, max rel err %.3g (limit 1e-9), %.2f s (limit 5 s)", worst, secs)};
}

Outcome dense_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  for (int pair = 0; pair < 20; ++pair) {
    const int d = 64;
    const Eigen::VectorXd m1 = normal_vector(d, rng, 1.0), m2 = normal_vector(d, rng, 1.0);
    // Alternate well-conditioned and sample-estimated covariances.
    Eigen::MatrixXd s1, s2;
    if (pair % 2 == 0) {
      s1 = synth::random_spd(d, rng, 0.01, 10.0);
      s2 = synth::random_spd(d, rng, 0.01, 10.0);
    } else {
      const Eigen::MatrixXd l = synth::random_spd(d, rng, 0.2, 2.0);
      s1 = percept::summarize(synth::sample(200, m1, l, rng)).cov;
      s2 = percept::summarize(synth::iid(150, static_cast<std::size_t>(d), rng, 0.0, 1.5)).cov;
    }
    const double want = oracle::frechet(to_vec(m1), to_mat(s1), to_vec(m2), to_mat(s2));
    const double got =
        percept::frechet_distance(synth::summary(m1, s1), synth::summary(m2, s2)).total;
    worst = std::max(worst, rel_err(got, want));
  }
  return {worst <= 1e-7,
          fmt("20 full-covariance pairs at D=64 vs Jacobi oracle, max rel err %.3g (limit 1e-7)",
              worst)};
}

Outcome identity_symmetry() {
  std::mt19937_64 rng(303);
  double id_ratio = 0.0, sym_ratio = 0.0, rot_err = 0.0;
  const int dims[] = {1, 2, 8, 64, 256};
  for (int trial = 0; trial < 15; ++trial) {
    const int d = dims[trial % 5];
    Eigen::MatrixXd sa, sb;
    if (trial % 3 == 2) {
      // Sample covariances, as produced from real embeddings.
      sa = percept::summarize(synth::iid(static_cast<std::size_t>(4 * d + 10), static_cast<std::size_t>(d), rng)).cov;
      sb = percept::summarize(synth::iid(static_cast<std::size_t>(4 * d + 10), static_cast<std::size_t>(d), rng, 0.2, 1.4)).cov;
    } else {
      sa = synth::random_spd(d, rng, 0.05, 5.0);
      sb = synth::random_spd(d, rng, 0.05, 5.0);
    }
    const auto a = synth::summary(normal_vector(d, rng, 1.0), sa);
    const auto b = synth::summary(normal_vector(d, rng, 1.0), sb);

    id_ratio = std::max(id_ratio, percept::frechet_distance(a, a).total / sa.trace());
    const double ab = percept::frechet_distance(a, b).total;
    const double ba = percept::frechet_distance(b, a).total;
    sym_ratio = std::max(sym_ratio, std::abs(ab - ba) / ab);

    const Eigen::MatrixXd q = synth::random_orthogonal(d, rng);
    const auto ra = synth::summary(q * a.mean, symmetrized(q * sa * q.transpose()));
    const auto rb = synth::summary(q * b.mean, symmetrized(q * sb * q.transpose()));
    rot_err = std::max(rot_err, rel_err(percept::frechet_distance(ra, rb).total, ab));
  }
  return {id_ratio <= 1e-8 && sym_ratio <= 1e-8 && rot_err <= 1e-7,
          fmt("FD(g,g)/Tr max %.3g (limit 1e-8), asymmetry/FD max %.3g (limit 1e-8), "
              "rotation rel err max %.3g (limit 1e-7)",
              id_ratio, sym_ratio, rot_err)};
}

Outcome extrapolation() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  const int d = 16;
  // P = N(0, I), Q = N(mu, diag(s^2)); FD* = |mu|^2 + sum (1 - s_i)^2.
  const Eigen::VectorXd mu = normal_vector(d, rng, 1.0);
  Eigen::VectorXd s(d);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int i = 0; i < d; ++i) s(i) = u(rng);
  double f_star = mu.squaredNorm();
  for (int i = 0; i < d; ++i) f_star += (1.0 - s(i)) * (1.0 - s(i));

  const std::size_t pool = 20000;
  const auto a = synth::sample(pool, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), rng);
  const auto b = synth::sample(pool, mu, Eigen::MatrixXd(s.asDiagonal()), rng);
  percept::ExtrapolationOptions opt;
  opt.sizes = {200, 400, 800, 1600};
  opt.draws_per_size = 5;
  opt.seed = 2024;
  const auto r = percept::extrapolate_fd(a, b, opt);
  const double err = rel_err(r.fd_infinity, f_star);
  const double secs = seconds_since(t0);
  return {err <= 0.05 && secs < 30.0,
          fmt("FD*=%.4f, FD_inf=%.4f (stderr %.3f, FD@200=%.4f), rel err %.3g (limit 0.05), "
              "%.2f s (limit 30 s)",
              f_star, r.fd_infinity, r.intercept_stderr, r.fd_at_n.front(), err, secs)};
}

Outcome pr_oracle() {
  std::mt19937_64 rng(505);
  const int ks[] = {1, 3, 5};
  int mismatches = 0;
  std::string first_bad;
  for (int inst = 0; inst < 25; ++inst) {
    const int k = ks[inst % 3];
    const std::size_t d = 1 + rng() % 16;
    const std::size_t nr = 10 + rng() % 191, ng = 10 + rng() % 191;
    percept::EmbeddingSet real, gen;
    if (inst % 5 == 4) {
      // Small-integer coordinates: many exactly tied distances.
      auto grid = [&](std::size_t n, int hi) {
        std::vector<float> v(n * d);
        for (float& f : v) f = static_cast<float>(rng() % static_cast<unsigned>(hi));
        return percept::EmbeddingSet(static_cast<std::uint32_t>(d), n, std::move(v));
      };
      real = grid(nr, 4);
      gen = grid(ng, 5);
    } else {
      const double offset = (inst % 2) ? 1000.0 : 0.0;
      real = synth::iid(nr, d, rng, offset, 1.0);
      gen = synth::iid(ng, d, rng, offset + 0.3, 0.8 + 0.1 * (inst % 7));
    }
    const auto got = percept::precision_recall(real, gen, k);
    const auto [p, r] = oracle::precision_recall(synth::to_rows(real), synth::to_rows(gen), k);
    if (got.precision != p || got.recall != r) {
      if (mismatches++ == 0) {
        first_bad = fmt(" first mismatch #%d: got %.6f/%.6f want %.6f/%.6f", inst, got.precision,
                        got.recall, p, r);
      }
    }
  }
  const auto same = synth::iid(200, 16, rng);
  const auto id = percept::precision_recall(same, same, 3);
  const auto far_a = synth::iid(200, 16, rng, 0.0, 0.5);
  const auto far_b = synth::iid(200, 16, rng, 100.0, 0.5);
  const auto dj = percept::precision_recall(far_a, far_b, 3);
  const bool ok = mismatches == 0 && id.precision == 1.0 && id.recall == 1.0 &&
                  dj.precision == 0.0 && dj.recall == 0.0;
  return {ok, fmt("%d/25 instances differ from brute force; identical sets %.3f/%.3f; "
                  "disjoint %.3f/%.3f",
                  mismatches, id.precision, id.recall, dj.precision, dj.recall) +
                  first_bad};
}

// Mean-shift pairs: variant = base + delta * u for a fixed unit vector u.
struct ShiftFixture {
  testing_support::TempDir dir;
  percept::PairManifest manifest;
};

void make_shift_manifest(ShiftFixture& fx, std::size_t pairs, int d, double delta,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto base = synth::iid(pairs, static_cast<std::size_t>(d), rng);
  Eigen::VectorXd u = normal_vector(d, rng, 1.0);
  u /= u.norm();
  std::vector<float> v(base.data().begin(), base.data().end());
  for (std::size_t i = 0; i < pairs; ++i) {
    for (int j = 0; j < d; ++j) v[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] += static_cast<float>(delta * u(j));
  }
  percept::write_embeddings(base, fx.dir / "base.emb");
  percept::write_embeddings(percept::EmbeddingSet(static_cast<std::uint32_t>(d), pairs, v),
                            fx.dir / "variant.emb");
  percept::write_manifest({"shift", "base.emb", "variant.emb", pairs, static_cast<std::uint32_t>(d)},
                          fx.dir / "manifest.json");
  fx.manifest = percept::read_manifest(fx.dir / "manifest.json");
}

percept::SweepConfig shift_config() {
  percept::SweepConfig cfg;
  cfg.set_size = 1000;
  cfg.draws = 10;
  cfg.diff_grid = percept::make_diff_grid(0.1);
  cfg.seed = 77;
  cfg.threads = 0;
  return cfg;
}

constexpr std::size_t kShiftPairs = 1427;

Outcome sweep_monotonic() {
  const auto t0 = Clock::now();
  ShiftFixture fx;
  make_shift_manifest(fx, kShiftPairs, 16, 5.0, 606);
  const auto curve = percept::run_sweep(fx.manifest, shift_config());
  const double secs = seconds_since(t0);

  bool monotone = true;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    monotone = monotone && curve.points[i].fd_mean >= curve.points[i - 1].fd_mean;
  }
  const double mt1 = curve.points.back().mean_term_mean;
  const bool mean_ok = std::abs(mt1 - 25.0) <= 2.5;

  // Baseline: two independent 50/50 assignments over the same identities.
  auto [base, variant] = percept::load_pairs(fx.manifest);
  std::mt19937_64 rng(0xba5e);
  std::vector<double> fds;
  for (int draw = 0; draw < 10; ++draw) {
    std::vector<std::size_t> ids(base.rows());
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(1000);
    auto mixture = [&] {
      std::vector<std::size_t> slots(1000);
      std::iota(slots.begin(), slots.end(), 0);
      std::shuffle(slots.begin(), slots.end(), rng);
      std::vector<float> data;
      for (std::size_t i = 0; i < 1000; ++i) {
        const bool positive = slots[i] < 500;
        auto row = positive ? variant.row(ids[i]) : base.row(ids[i]);
        data.insert(data.end(), row.begin(), row.end());
      }
      return percept::EmbeddingSet(base.dim(), 1000, std::move(data));
    };
    const auto a = mixture();
    const auto b = mixture();
    fds.push_back(percept::fd_between_sets(a, b).total);
  }
  double bmean = 0.0;
  for (double f : fds) bmean += f;
  bmean /= 10.0;
  double bvar = 0.0;
  for (double f : fds) bvar += (f - bmean) * (f - bmean);
  const double bstd = std::sqrt(bvar / 10.0);
  const double sigma = std::max(curve.points.front().fd_std, bstd);
  const double gap = std::abs(curve.points.front().fd_mean - bmean);
  const bool base_ok = gap <= 3.0 * sigma;

  std::string trace;
  for (const auto& p : curve.points) trace += fmt(" %.3g", p.fd_mean);
  return {monotone && mean_ok && base_ok && secs < 60.0,
          fmt("non-decreasing=%s, mean_term(1)=%.3f (25 +- 2.5), fd(0)=%.4f vs baseline "
              "%.4f +- %.4f (gap %.2f sigma, limit 3), %.2f s (limit 60 s); fd_mean:",
              monotone ? "yes" : "no", mt1, curve.points.front().fd_mean, bmean, bstd,
              gap / sigma, secs) +
              trace};
}

Outcome sweep_determinism() {
  ShiftFixture fx;
  make_shift_manifest(fx, kShiftPairs, 16, 5.0, 707);
  auto cfg = shift_config();
  cfg.threads = 1;
  const auto a = percept::sweep_to_csv({percept::run_sweep(fx.manifest, cfg)});
  const auto b = percept::sweep_to_csv({percept::run_sweep(fx.manifest, cfg)});
  cfg.threads = 8;
  const auto c = percept::sweep_to_csv({percept::run_sweep(fx.manifest, cfg)});
  return {a == b && a == c,
          fmt("same seed: %s; 1 vs 8 threads: %s (%zu CSV bytes)", a == b ? "identical" : "DIFFER",
              a == c ? "identical" : "DIFFER", a.size())};
}

percept::Image random_image(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  percept::Image img{w, h, 3, std::vector<std::uint8_t>(w * h * 3)};
  // Smooth-ish content plus noise so rounding is exercised away from constants.
  std::uniform_int_distribution<int> noise(-40, 40);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const int v = static_cast<int>((x * 3 + y * 2 + c * 50) % 256) + noise(rng);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return img;
}

Outcome blur() {
  std::mt19937_64 rng(808);
  int worst = 0;
  for (int i = 0; i < 10; ++i) {
    const auto img = random_image(64, 64, rng);
    const double sigma = 0.5 + 0.4 * i;
    const percept::BlurParams p{7, sigma, 64};
    const auto got = percept::gaussian_blur(img, p);
    const auto want = oracle::conv2d(img.pixels, 64, 64, 3, percept::gaussian_kernel(7, sigma));
    for (std::size_t k = 0; k < want.size(); ++k) {
      worst = std::max(worst, std::abs(int(got.pixels[k]) - int(want[k])));
    }
  }

  const auto img = random_image(64, 64, rng);
  const percept::LabelMap none{64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
  const bool empty_ok =
      percept::blur_region(img, none, percept::RegionSpec{"hat", {18}, 64}, {7, 2.0, 64}) == img;

  const auto big = random_image(512, 512, rng);
  const percept::LabelMap face{512, 512, std::vector<std::uint8_t>(512 * 512, 1)};
  const percept::BlurParams full_res{111, 100.0, 512};
  const auto all = percept::all_region();
  std::vector<percept::Image> outs(100);
  const auto t0 = Clock::now();
  percept::detail::parallel_for(100, 0, [&](std::size_t i) {
    outs[i] = percept::blur_region(big, face, all, full_res);
  });
  const double secs = seconds_since(t0);
  bool same = true;
  for (const auto& o : outs) same = same && o == outs.front();
  return {worst <= 1 && empty_ok && secs < 60.0 && same,
          fmt("7x7 vs direct 2-D oracle max diff %d (limit 1); empty mask identical: %s; "
              "100 x 512x512 'All' with 111/100: %.2f s (limit 60 s)",
              worst, empty_ok ? "yes" : "no", secs)};
}

Outcome region_report() {
  std::mt19937_64 rng(909);
  const std::size_t d = 64;
  const auto all = synth::iid(1000, d, rng);
  const auto eyes = synth::iid(800, d, rng);
  const auto hat = synth::iid(300, d, rng);
  // "Blurred" embeddings: a shrunk, shifted copy of the originals.
  auto degrade = [&](const percept::EmbeddingSet& s, float shrink, float shift) {
    std::vector<float> v(s.data().begin(), s.data().end());
    for (float& f : v) f = f * shrink + shift;
    return percept::EmbeddingSet(s.dim(), s.count(), std::move(v));
  };
  const std::map<std::string, percept::EmbeddingSet> orig{{"All", all}, {"eyes", eyes}, {"hat", hat}};
  const std::map<std::string, percept::EmbeddingSet> blurred{
      {"All", degrade(all, 0.7f, 0.2f)}, {"eyes", degrade(eyes, 0.9f, 0.05f)}, {"hat", hat}};
  const auto rep = percept::region_fd_report(orig, blurred);
  double all_norm = -1.0, hat_norm = -1.0;
  for (const auto& e : rep.entries) {
    if (e.name == "All") all_norm = e.normalized_fd;
    if (e.name == "hat") hat_norm = e.normalized_fd;
  }
  // The report must also survive its CSV form unchanged.
  const auto back = percept::region_report_from_csv(percept::region_report_to_csv(rep));
  const bool csv_ok = back.entries.size() == rep.entries.size() &&
                      back.entries.front().normalized_fd == 1.0;
  return {all_norm == 1.0 && hat_norm >= 0.0 && hat_norm < 0.01 && csv_ok,
          fmt("All normalized = %.17g (must be exactly 1); unchanged region = %.3g (limit 0.01)",
              all_norm, hat_norm)};
}

Outcome scale() {
  const auto t0 = Clock::now();
  const std::size_t d = 2048;
  std::mt19937_64 rng(1010);
  const auto real = synth::iid(70000, d, rng);
  const auto gen = synth::iid(50000, d, rng, 0.02, 1.05);
  const double gen_secs = seconds_since(t0);

  const auto t1 = Clock::now();
  const std::size_t threads = percept::resolve_threads(0);
  const auto fd = percept::fd_between_sets(real, gen, threads);
  const double fd_secs = seconds_since(t1);

  percept::PrOptions opt;
  opt.threads = threads;
  opt.block_budget_bytes = std::size_t{4} << 30;
  percept::PrDiagnostics diag;
  const auto t2 = Clock::now();
  const auto pr = percept::precision_recall(real, gen, 3, opt, &diag);
  const double pr_secs = seconds_since(t2);
  const double total = fd_secs + pr_secs;
  const bool ok = total < 1800.0 && diag.working_bytes <= opt.block_budget_bytes &&
                  std::isfinite(fd.total) && pr.precision >= 0.0 && pr.precision <= 1.0;
  return {ok, fmt("70000 real vs 50000 gen x 2048 on %zu thread(s): FD %.4f in %.1f s, "
                  "P/R %.4f/%.4f in %.1f s, total %.1f s (limit 1800 s); working buffers "
                  "%.1f MiB (limit 4096 MiB), block %zu rows, %llu direct checks; "
                  "data generation %.1f s (not timed)",
                  threads, fd.total, fd_secs, pr.precision, pr.recall, pr_secs, total,
                  static_cast<double>(diag.working_bytes) / (1 << 20), diag.block_rows,
                  static_cast<unsigned long long>(diag.direct_checks), gen_secs)};
}

const std::vector<Check>& checks() {
  static const std::vector<Check> all{
      {"analytic_fd", analytic_fd},
      {"dense_oracle", dense_oracle},
      {"identity_symmetry", identity_symmetry},
      {"extrapolation", extrapolation},
      {"pr_oracle", pr_oracle},
      {"sweep_monotonic", sweep_monotonic},
      {"sweep_determinism", sweep_determinism},
      {"blur", blur},
      {"region_report", region_report},
      {"scale", scale},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--list") == 0) {
      for (const auto& c : checks()) std::printf("%s\n", c.name);
      return 0;
    }
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--list] [--only NAME]\n");
      return 2;
    }
  }
  int failed = 0, ran = 0;
  for (const auto& c : checks()) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no check named '%s'\n", only.c_str());
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
