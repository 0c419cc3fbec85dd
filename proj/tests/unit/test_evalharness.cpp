#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "crd/backends.hpp"
#include "crd/evalharness.hpp"
#include "crd/metadata2crd.hpp"
#include "hp_math.hpp"
#include "metrics_oracle.hpp"
#include "published_tables.hpp"
#include "support.hpp"

using namespace crd;

namespace {

const Taxonomy& tax() {
  static const Taxonomy t = load_taxonomy(testsupport::data("taxonomy.json"));
  return t;
}

Judgement j(int level) {
  return {level != 0, level == 0 ? Severity::none : level == 1 ? Severity::mild : Severity::strong};
}

struct Fixture {
  DescriptorColumn preds, labels;
  std::vector<oracle::Row> rows;
};

Fixture random_fixture(std::mt19937_64& rng, std::size_t n_apps, bool graded) {
  Fixture f;
  for (std::size_t i = 0; i < n_apps; ++i) {
    const int label = static_cast<int>(rng() % (graded ? 3 : 2));
    // Bias predictions toward the label so every cell of the confusion occurs.
    const int pred = rng() % 3 == 0 ? static_cast<int>(rng() % (graded ? 3 : 2)) : label;
    const std::string id = "app-" + std::to_string(i);
    f.labels[id] = j(label);
    f.preds[id] = j(pred);
    f.rows.push_back({label, pred});
  }
  return f;
}

void check_metric(const Metric& got, const std::optional<double>& expected) {
  REQUIRE(got.has_value() == expected.has_value());
  if (got) CHECK(*got == *expected);
}

double avg_percent(const std::array<double, 12>& values) {
  std::vector<Metric> m(values.begin(), values.end());
  return round_half_up(macro_average(m).mean, 2);
}

}  // namespace

TEST_CASE("prediction text mapping") {
  const auto& rv = tax().apple("realistic_violence");
  const auto p = parse_prediction("It is violent. PRESENT: yes SEVERITY: mild", "a", rv);
  CHECK(p.present);
  CHECK(p.severity == Severity::mild);
  CHECK_FALSE(p.unparsed);

  const auto empty = parse_prediction("", "a", rv);
  CHECK_FALSE(empty.present);
  CHECK(empty.severity == Severity::none);
  CHECK(empty.unparsed);

  const auto ungraded = parse_prediction("PRESENT: yes SEVERITY: strong", "a", tax().apple("contests"));
  CHECK(ungraded.present);
  CHECK(ungraded.severity == Severity::none);

  const auto absent = parse_prediction("PRESENT: no SEVERITY: strong", "a", rv);
  CHECK(absent.severity == Severity::none);
}

TEST_CASE("unparsed rate over 1000 mock outputs equals the scripted no-sentinel share") {
  const auto script = load_mock_script(testsupport::data("mock/generator.json"));
  const auto& rv = tax().apple("realistic_violence");
  std::size_t flagged = 0, planted = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::string prompt = std::string("TARGET DESCRIPTOR: realistic_violence\nBEGIN APP DESCRIPTION\n") +
                               (i % 2 ? "constant bloodshed" : "a calm garden") + "\nEND APP DESCRIPTION\n";
    GenerationRequest r;
    r.user_parts = {TextPart{prompt}};
    std::string out = mock_rule_engine(r, script, i);
    // Every 8th reply is cut before its verdict, as a length-limited reply would be.
    if (i % 8 == 0) {
      out = out.substr(0, std::min<std::size_t>(out.size(), 20));
      ++planted;
    }
    flagged += parse_prediction(out, "a", rv).unparsed;
  }
  CHECK(planted == 125);
  CHECK(flagged == planted);
}

TEST_CASE("aggregation is OR over presence and max over severity") {
  auto pred = [](bool present, Severity s) { return Prediction{"a", "realistic_violence", present, s, "", "", false}; };
  const std::vector<Prediction> any{pred(false, Severity::none), pred(true, Severity::mild), pred(false, Severity::none)};
  CHECK(aggregate_app(any).present);
  const std::vector<Prediction> sev{pred(true, Severity::mild), pred(true, Severity::strong)};
  CHECK(aggregate_app(sev).severity == Severity::strong);
  const std::vector<Prediction> single{pred(true, Severity::mild)};
  CHECK(aggregate_app(single) == single[0]);
  CHECK_THROWS_AS(aggregate_app({}), PreconditionError);
  std::vector<Prediction> mixed{pred(true, Severity::mild), pred(true, Severity::mild)};
  mixed[1].app_id = "b";
  CHECK_THROWS_AS(aggregate_app(mixed), PreconditionError);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Prediction> ps;
    bool any_present = false;
    int max_level = 0;
    for (std::size_t k = 0; k < 1 + rng() % 6; ++k) {
      const int level = static_cast<int>(rng() % 3);
      ps.push_back(pred(level != 0, level == 0 ? Severity::none : level == 1 ? Severity::mild : Severity::strong));
      any_present = any_present || level != 0;
      max_level = std::max(max_level, level);
    }
    const auto a = aggregate_app(ps);
    CHECK(a.present == any_present);
    CHECK(static_cast<int>(a.severity) == max_level);
  }
}

TEST_CASE("binary metrics worked example") {
  DescriptorColumn p, l;
  int n = 0;
  auto add = [&](bool label, bool pred, int count) {
    for (int i = 0; i < count; ++i, ++n) {
      l["a" + std::to_string(n)] = j(label);
      p["a" + std::to_string(n)] = j(pred);
    }
  };
  add(true, true, 3);
  add(true, false, 1);
  add(false, false, 5);
  add(false, true, 1);
  const auto [c, m] = binary_metrics(p, l, "contests");
  CHECK(c == ConfusionCounts{3, 1, 5, 1});
  CHECK(*m.r_pos == 0.75);
  CHECK(*m.p_neg == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("all-negative data leaves positive recall undefined") {
  DescriptorColumn p, l;
  for (int i = 0; i < 10; ++i) p["a" + std::to_string(i)] = l["a" + std::to_string(i)] = j(0);
  const auto [c, m] = binary_metrics(p, l, "contests");
  CHECK_FALSE(m.r_pos);
  CHECK_FALSE(m.p_pos);
  CHECK(*m.p_neg == 1.0);
  CHECK(c.total() == 10);
}

TEST_CASE("binary metrics key mismatch") {
  DescriptorColumn p{{"a", j(1)}}, l{{"b", j(1)}};
  CHECK_THROWS_AS(binary_metrics(p, l, "contests"), ValidationError);
}

TEST_CASE("binary metrics equal brute-force counting") {
  std::mt19937_64 rng(200);
  for (std::size_t n : {200u, 1000u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto f = random_fixture(rng, n, false);
      const auto [c, m] = binary_metrics(f.preds, f.labels, "contests");
      const auto o = oracle::binary(f.rows);
      CHECK(c == ConfusionCounts{o.tp, o.fp, o.tn, o.fn});
      check_metric(m.r_pos, o.r_pos);
      check_metric(m.p_pos, o.p_pos);
      check_metric(m.r_neg, o.r_neg);
      check_metric(m.p_neg, o.p_neg);
    }
  }
}

TEST_CASE("confusion counts are additive over disjoint partitions") {
  std::mt19937_64 rng(9);
  const auto f = random_fixture(rng, 400, false);
  DescriptorColumn p1, l1, p2, l2;
  for (const auto& [id, lab] : f.labels) {
    const bool first = std::hash<std::string>{}(id) % 2 == 0;
    (first ? l1 : l2)[id] = lab;
    (first ? p1 : p2)[id] = f.preds.at(id);
  }
  const auto whole = binary_metrics(f.preds, f.labels, "x").first;
  const auto a = binary_metrics(p1, l1, "x").first;
  const auto b = binary_metrics(p2, l2, "x").first;
  CHECK(whole == ConfusionCounts{a.tp + b.tp, a.fp + b.fp, a.tn + b.tn, a.fn + b.fn});
}

TEST_CASE("multiclass metrics equal brute-force per-class counting on nine descriptors") {
  std::mt19937_64 rng(91);
  std::size_t graded = 0;
  for (const auto& d : tax().apple_descriptors()) {
    if (!d.severity_supported) continue;
    ++graded;
    const auto f = random_fixture(rng, 1000, true);
    const auto m = multiclass_metrics(f.preds, f.labels, d);
    const auto [pm, rm] = oracle::class_pr(f.rows, 1);
    const auto [ps, rs] = oracle::class_pr(f.rows, 2);
    check_metric(m.p_mild, pm);
    check_metric(m.r_mild, rm);
    check_metric(m.p_strong, ps);
    check_metric(m.r_strong, rs);
  }
  CHECK(graded == 9);
}

TEST_CASE("perfect multiclass predictions score 1") {
  DescriptorColumn c{{"a", j(1)}, {"b", j(2)}, {"c", j(0)}};
  const auto m = multiclass_metrics(c, c, tax().apple("realistic_violence"));
  CHECK(*m.p_mild == 1.0);
  CHECK(*m.r_mild == 1.0);
  CHECK(*m.p_strong == 1.0);
  CHECK(*m.r_strong == 1.0);
}

TEST_CASE("multiclass metrics refuse ungraded descriptors") {
  DescriptorColumn c{{"a", j(1)}};
  for (const char* id : {"real_gambling", "unrestricted_web_access", "contests"})
    CHECK_THROWS_AS(multiclass_metrics(c, c, tax().apple(id)), ValidationError);
}

TEST_CASE("macro average basics") {
  const std::vector<Metric> one{0.4};
  CHECK(macro_average(one).mean == 0.4);
  const std::vector<Metric> constant(7, Metric{0.37});
  CHECK(macro_average(constant).mean == doctest::Approx(0.37).epsilon(1e-15));
  const std::vector<Metric> gaps{0.2, std::nullopt, 0.4};
  const auto a = macro_average(gaps);
  CHECK(a.mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(a.included == 2);
  CHECK(a.excluded == 1);
  const std::vector<Metric> none{std::nullopt, std::nullopt};
  CHECK_THROWS_AS(macro_average(none), PreconditionError);
}

TEST_CASE("round half up") {
  CHECK(round_half_up(51.045, 2) == doctest::Approx(51.05).epsilon(1e-15));
  CHECK(round_half_up(4.5856, 2) == doctest::Approx(4.59).epsilon(1e-15));
  CHECK(round_half_up(0.125, 2) == doctest::Approx(0.13).epsilon(1e-15));
  CHECK(round_half_up(2.5, 0) == 3.0);
  CHECK(to_percent_2dp(0.75) == 75.0);
}

TEST_CASE("binary table averages reproduce from the per-descriptor rows") {
  for (const auto& col : published::kBinary) {
    CAPTURE(col.model);
    const double r = avg_percent(col.r_pos);
    const double p = avg_percent(col.p_neg);
    CHECK(std::abs(r - col.avg_r_pos) <= 0.005);
    CHECK(std::abs(p - col.avg_p_neg) <= 0.005);
    // Independent extended-precision mean.
    std::vector<double> v(col.r_pos.begin(), col.r_pos.end());
    CHECK(std::abs(macro_average(std::vector<Metric>(col.r_pos.begin(), col.r_pos.end())).mean - oracle::hp_mean(v)) <
          1e-12);
  }
}

TEST_CASE("multiclass column averages equal an extended-precision mean") {
  for (const auto& col : published::kMulticlass)
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> v;
      std::vector<Metric> m;
      for (const auto& row : col.rows) {
        v.push_back(row[k]);
        m.push_back(row[k]);
      }
      CHECK(std::abs(macro_average(m).mean - oracle::hp_mean(v)) < 1e-12);
    }
}

TEST_CASE("evaluate over the fixture files") {
  const auto preds = load_predictions(testsupport::data("fixtures/predictions32.jsonl"), tax());
  const auto labels = load_labels(testsupport::data("fixtures/labels32.jsonl"), tax());
  CHECK(preds.rows == 384);
  CHECK(preds.unparsed == 0);
  const auto report = evaluate(preds.matrix, labels, tax());
  CHECK(report.descriptors.size() == 12);
  std::size_t multiclass = 0;
  for (const auto& d : report.descriptors) {
    CHECK(d.counts.total() == 32);
    multiclass += d.multiclass.has_value();
  }
  CHECK(multiclass == 9);
  for (const char* key : {"r_pos", "p_neg"}) CHECK(report.averages.count(key));
  const json js = to_json(report);
  CHECK(js["descriptors"].size() == 12);
  CHECK(render_eval_report(report, tax()).find("Realistic Violence") != std::string::npos);
}

TEST_CASE("prediction files aggregate several rows per cell") {
  testsupport::TempDir dir;
  {
    std::ofstream out(dir / "p.jsonl");
    out << R"({"app_id":"a","descriptor":"realistic_violence","text":"PRESENT: no"})" << "\n";
    out << R"({"app_id":"a","descriptor":"realistic_violence","text":"PRESENT: yes SEVERITY: strong"})" << "\n";
    out << R"({"app_id":"a","descriptor":"Contests","text":"garbled"})" << "\n";
  }
  const auto loaded = load_predictions(dir / "p.jsonl", tax());
  CHECK(loaded.rows == 3);
  CHECK(loaded.unparsed == 1);
  CHECK(loaded.matrix.at("a").at("realistic_violence") == Judgement{true, Severity::strong});
  CHECK(loaded.matrix.at("a").at("contests") == Judgement{false, Severity::none});
}
