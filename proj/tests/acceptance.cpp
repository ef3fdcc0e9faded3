// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Pass criterion names as arguments to run a subset, e.g.
//   acceptance round_trip nt_xent

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rewrite_lab/contrastive.hpp"
#include "rewrite_lab/decode.hpp"
#include "rewrite_lab/harness.hpp"
#include "rewrite_lab/losses.hpp"
#include "rewrite_lab/metrics.hpp"
#include "rewrite_lab/supervision.hpp"

using namespace rewrite_lab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using MatD = Matrix<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rewrite_lab_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string ReadAll(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome RoundTrip() {
  auto examples = GenerateSynthetic(1000, 1);
  examples.push_back(fixtures::Coreference());
  examples.push_back(fixtures::Omission());
  const auto start = Clock::now();
  int ok = 0;
  for (const auto& ex : examples) {
    try {
      ok += ApplyEditMatrix(ex.query, ex.FlatContext(), DeriveEditMatrix(ex)) == *ex.rewrite;
    } catch (const Error&) {
    }
  }
  const double secs = Seconds(start);
  Outcome o;
  o.detail = std::to_string(ok) + "/" + std::to_string(examples.size()) + " exact, " +
             Fmt(secs) + " s";
  o.Require(ok == static_cast<int>(examples.size()), "not every example reconstructed");
  o.Require(secs < 2.0, "slower than 2 s");
  return o;
}

Outcome Gradients() {
  gradcheck::Setup setup = gradcheck::TinySetup();
  const auto start = Clock::now();
  const auto report = gradcheck::Run(setup, 1e-4, 1);
  const double secs = Seconds(start);
  Outcome o;
  o.detail = std::to_string(report.checked) + " entries, worst rel err";
  for (int k = 0; k < 5; ++k) {
    o.detail += std::string(" ") + gradcheck::kRoots[k] + "=" + Fmt(report.worst[k]);
  }
  o.detail += ", " + Fmt(secs) + " s";
  for (int k = 0; k < 5; ++k) {
    o.Require(report.worst[k] <= 1e-4,
              std::string(gradcheck::kRoots[k]) + " at " + report.where[k]);
  }
  o.Require(secs < 60.0, "slower than 60 s");
  return o;
}

MatD UnitWithCosine(double c) {
  MatD out(1, 2);
  out << c, std::sqrt(1 - c * c);
  return out;
}

Outcome NtXent() {
  std::mt19937 gen(2024);
  std::normal_distribution<double> normal;
  auto random = [&](int rows, int cols) {
    MatD m(rows, cols);
    for (int k = 0; k < m.size(); ++k) m.data()[k] = normal(gen);
    return m;
  };
  auto rows = [](const MatD& m) {
    std::vector<oracle::Vec> out;
    for (int r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).data(), m.row(r).data() + m.cols());
    return out;
  };
  double worst = 0;
  int batches = 0;
  for (int B : {1, 2, 4, 8}) {
    for (int k = 0; k < 13 && batches < 50; ++k, ++batches) {
      const MatD a = random(B, 8), p = random(B, 8), n = random(B, 8);
      const double tau = 0.1 + 0.9 * (k % 4) / 3.0;
      worst = std::max(worst, std::abs(LossIcon(a, p, n, tau) -
                                       oracle::NtXent(rows(a), rows(p), rows(n), tau)));
    }
  }
  const MatD anchor = UnitWithCosine(1.0);
  const double sym = LossIcon(anchor, UnitWithCosine(0.4), UnitWithCosine(0.4), 0.5);
  const double closed = LossIcon(anchor, UnitWithCosine(0.9), UnitWithCosine(0.1), 0.5);
  Outcome o;
  o.detail = std::to_string(batches) + " batches, max |diff| " + Fmt(worst) + "; symmetric " +
             Fmt(sym, "%.9f") + "; closed form " + Fmt(closed, "%.9f");
  o.Require(batches == 50, "wrong batch count");
  o.Require(worst <= 1e-6, "oracle mismatch");
  o.Require(std::abs(sym - std::log(2.0)) <= 1e-6, "symmetric case is not ln 2");
  o.Require(std::abs(closed - std::log(1 + std::exp(-1.6))) <= 1e-6, "closed form mismatch");
  return o;
}

Outcome BiKlChecks() {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  double worst_self = 0, worst_asym = 0, most_negative = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 7;
    std::vector<double> p(n), q(n);
    for (int k = 0; k < n; ++k) {
      p[k] = u(gen);
      q[k] = u(gen);
    }
    double sp = 0, sq = 0;
    for (int k = 0; k < n; ++k) {
      sp += p[k];
      sq += q[k];
    }
    for (int k = 0; k < n; ++k) {
      p[k] /= sp;
      q[k] /= sq;
    }
    const double pq = BiKl<double>(p, q), qp = BiKl<double>(q, p);
    worst_self = std::max(worst_self, std::abs(BiKl<double>(p, p)));
    worst_asym = std::max(worst_asym, std::abs(pq - qp));
    most_negative = std::min({most_negative, pq, qp});
  }
  const std::vector<double> a = {0.8, 0.2}, b = {0.2, 0.8};
  const double hand = BiKl<double>(a, b);
  Outcome o;
  o.detail = "self " + Fmt(worst_self) + ", asymmetry " + Fmt(worst_asym) + ", min " +
             Fmt(most_negative) + ", hand " + Fmt(hand, "%.12f");
  o.Require(worst_self <= 1e-9, "identical distributions not 0");
  o.Require(worst_asym <= 1e-9, "not symmetric");
  o.Require(most_negative >= 0, "negative divergence");
  o.Require(std::abs(hand - 1.2 * std::log(4.0)) <= 1e-9, "hand case mismatch");
  return o;
}

std::vector<Tokens> RandomCorpus(std::mt19937& gen, int size, int min_len, int max_len) {
  std::vector<Tokens> out(size);
  for (auto& s : out) {
    s.resize(min_len + gen() % (max_len - min_len + 1));
    for (auto& t : s) t = std::string(1, static_cast<char>('a' + gen() % 4));
  }
  return out;
}

Outcome Metrics() {
  std::mt19937 gen(99);
  const auto cands = RandomCorpus(gen, 100, 4, 10);
  const auto refs = RandomCorpus(gen, 100, 4, 10);
  double worst = 0;
  for (int n : {1, 2, 4}) {
    worst = std::max(worst, std::abs(Bleu(cands, refs, n) - oracle::Bleu(cands, refs, n)));
  }
  for (int n : {1, 2}) {
    worst = std::max(worst, std::abs(RougeN(cands, refs, n) - oracle::RougeN(cands, refs, n)));
  }
  worst = std::max(worst, std::abs(RougeL(cands, refs) - oracle::RougeL(cands, refs)));

  std::vector<Tokens> rewrites, queries;
  for (const auto& ex : GenerateSynthetic(100, 5)) {
    rewrites.push_back(*ex.rewrite);
    queries.push_back(ex.query);
  }
  double lowest = 1;
  for (double v : Evaluate(rewrites, rewrites, queries).Values()) lowest = std::min(lowest, v);
  Outcome o;
  o.detail = "max |diff| " + Fmt(worst) + ", identical-corpus min score " + Fmt(lowest, "%.6f");
  o.Require(worst <= 1e-9, "oracle mismatch");
  o.Require(lowest == 1.0, "identical corpus below 1");
  return o;
}

Outcome Learnability() {
  const fs::path dir = Scratch("learnability");
  RunConfig base;
  base.train_path = (dir / "train.jsonl").string();
  base.eval_path = (dir / "heldout.jsonl").string();
  SaveJsonl(base.train_path, GenerateSynthetic(500, 1));
  const auto heldout = GenerateSynthetic(100, 2);
  SaveJsonl(base.eval_path, heldout);

  Outcome o;
  auto run = [&](const std::string& label, RunConfig config, double min_em) {
    config.output_dir = (dir / label).string();
    const auto start = Clock::now();
    const TrainResult r = Train(config);
    const double secs = Seconds(start);
    const double em = EvaluateModel(r.params, r.vocab, heldout).report.em;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += label + " EM " + Fmt(em, "%.2f") + " in " + Fmt(secs, "%.0f") + " s";
    o.Require(em >= min_em, label + " EM below " + Fmt(min_em, "%.2f"));
    o.Require(secs <= 300.0, label + " over 5 minutes");
  };
  run("default", base, 0.90);
  RunConfig plain = base;
  plain.loss.beta = 0;
  plain.loss.gamma = 0;
  run("beta=gamma=0", plain, 0.85);
  return o;
}

RunConfig SmallRun(const fs::path& dir) {
  RunConfig c;
  c.model.embed_dim = 32;
  c.model.hidden_dim = 32;
  c.epochs = 2;
  c.train_path = (dir / "train.jsonl").string();
  c.eval_path = (dir / "eval.jsonl").string();
  SaveJsonl(c.train_path, GenerateSynthetic(40, 1));
  SaveJsonl(c.eval_path, GenerateSynthetic(20, 2));
  return c;
}

Outcome Determinism() {
  const fs::path dir = Scratch("determinism");
  RunConfig c = SmallRun(dir);
  const auto examples = LoadJsonl(c.train_path).examples;
  Trainer a(c, examples), b(c, examples);
  double worst = 0;
  for (int step = 0; step < 5; ++step) {
    const LossBreakdown x = a.Step(), y = b.Step();
    for (auto m : {&LossBreakdown::l_mat_cq1, &LossBreakdown::l_mat_cq2, &LossBreakdown::l_det_cq1,
                   &LossBreakdown::l_det_cq2, &LossBreakdown::l_icon, &LossBreakdown::l_pcon,
                   &LossBreakdown::l_final}) {
      worst = std::max(worst, std::abs(x.*m - y.*m));
    }
  }
  std::vector<std::string> csvs;
  for (int rep = 0; rep < 2; ++rep) {
    c.output_dir = (dir / ("rep" + std::to_string(rep))).string();
    const std::string sweep = (dir / ("sweep" + std::to_string(rep) + ".csv")).string();
    const std::string neg = (dir / ("neg" + std::to_string(rep) + ".csv")).string();
    SweepTemperature(c, {0.1, 0.5, 1.0}, sweep);
    CompareNegativeStrategies(c, neg);
    csvs.push_back(ReadAll(sweep));
    csvs.push_back(ReadAll(neg));
  }
  Outcome o;
  o.detail = "first 5 steps max |diff| " + Fmt(worst);
  o.Require(worst <= 1e-12, "loss breakdowns differ");
  o.Require(csvs[0] == csvs[2] && !csvs[0].empty(), "sweep CSVs differ");
  o.Require(csvs[1] == csvs[3] && !csvs[1].empty(), "strategy CSVs differ");
  return o;
}

Outcome NegativeStrategies() {
  const fs::path dir = Scratch("negatives");
  RunConfig c = SmallRun(dir);
  c.output_dir = (dir / "run").string();
  const std::string csv = (dir / "neg.csv").string();
  CompareNegativeStrategies(c, csv);
  std::vector<std::string> lines;
  std::stringstream ss(ReadAll(csv));
  for (std::string line; std::getline(ss, line);) lines.push_back(line);

  Outcome o;
  o.Require(lines.size() == 4, "expected header plus 3 rows, got " + std::to_string(lines.size()));
  std::vector<std::string> labels;
  for (size_t k = 1; k < lines.size(); ++k) labels.push_back(lines[k].substr(0, lines[k].find(',')));
  o.Require(lines.size() > 0 && lines[0].rfind("strategy,", 0) == 0, "missing strategy column");
  o.Require(labels == std::vector<std::string>{"rd", "origin", "se"}, "unexpected strategy rows");

  // Exhaustive over lengths; many draws per length.
  Rng rng(31);
  int wrong = 0;
  for (int n = 2; n <= 20; ++n) {
    Tokens q(n);
    for (int k = 0; k < n; ++k) q[k] = "w" + std::to_string(k);
    const int expected = std::max(1, static_cast<int>(std::lround(0.2 * n)));
    for (int trial = 0; trial < 200; ++trial) {
      const Tokens out = RandomDeletion(q, rng);
      wrong += static_cast<int>(q.size() - out.size()) != expected || !oracle::IsSubsequence(out, q);
    }
  }
  o.detail = "rows:";
  for (const auto& l : labels) o.detail += " " + l;
  o.detail += "; deletion count violations " + std::to_string(wrong) + " over N=2..20";
  o.Require(wrong == 0, "random deletion count wrong");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"round_trip", RoundTrip},
      {"gradients", Gradients},
      {"nt_xent", NtXent},
      {"bi_kl", BiKlChecks},
      {"metrics", Metrics},
      {"learnability", Learnability},
      {"determinism", Determinism},
      {"negative_strategies", NegativeStrategies},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
