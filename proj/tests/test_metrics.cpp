#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "skar/error.hpp"
#include "skar/metrics.hpp"
#include "support/generators.hpp"

using namespace skar;

namespace {

TrainReport curve(std::vector<double> test_acc, double epoch0 = 0.0) {
  TrainReport r;
  r.epoch0_test_acc = epoch0;
  for (std::size_t e = 0; e < test_acc.size(); ++e) {
    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr = 0.01;
    rec.loss = 1.0;
    rec.test_acc = test_acc[e];
    r.curve.push_back(rec);
  }
  return r;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("jumpstart examples") {
  CHECK(jumpstart(curve({0.50, 0.6}), curve({0.67, 0.7})) == doctest::Approx(0.17).epsilon(1e-12));
  const auto r = curve({0.3, 0.4, 0.5});
  CHECK(jumpstart(r, r) == 0.0);
  CHECK(jumpstart(curve({0.6}), curve({0.4})) < 0.0);
}

TEST_CASE("asymptotic examples") {
  CHECK(asymptotic(curve({0.2, 0.41, 0.3}), curve({0.5, 0.82})) == 0.41);
  const auto r = curve({0.3, 0.4, 0.5});
  CHECK(asymptotic(r, r) == 0.0);
  const auto up_a = curve({0.1, 0.2, 0.35});
  const auto up_b = curve({0.15, 0.3, 0.6});
  CHECK(asymptotic(up_a, up_b) == 0.6 - 0.35);
}

TEST_CASE("empty curves are errors that name the report") {
  const auto r = curve({0.5});
  try {
    jumpstart(TrainReport{}, r);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("baseline") != std::string::npos);
  }
  try {
    asymptotic(r, TrainReport{});
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("transferred") != std::string::npos);
  }
}

TEST_CASE("property: metrics are antisymmetric and ignore irrelevant appended epochs") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = gen::report(rng, gen::between(rng, 1, 12));
    const auto b = gen::report(rng, gen::between(rng, 1, 12));
    REQUIRE(jumpstart(a, b) == -jumpstart(b, a));
    REQUIRE(asymptotic(a, b) == -asymptotic(b, a));
    const auto cmp = compare("m", a, b);
    REQUIRE(cmp.jumpstart >= -1.0);
    REQUIRE(cmp.jumpstart <= 1.0);
    REQUIRE(cmp.final == b.final());
    REQUIRE(cmp.asymptotic == cmp.final - cmp.baseline_final);

    // Appended epochs at or below the running best change neither metric.
    auto longer = b;
    for (std::size_t extra = gen::between(rng, 1, 5); extra > 0; --extra) {
      EpochRecord rec = longer.curve.back();
      rec.epoch += 1;
      rec.test_acc = rng.uniform(0.0, b.final());
      longer.curve.push_back(rec);
    }
    REQUIRE(jumpstart(a, longer) == jumpstart(a, b));
    REQUIRE(asymptotic(a, longer) == asymptotic(a, b));
  }
}

TEST_CASE("average takes seed means") {
  const auto c1 = compare("stgcn", curve({0.2, 0.4}, 0.1), curve({0.5, 0.6}, 0.3));
  const auto c2 = compare("stgcn", curve({0.4, 0.6}, 0.3), curve({0.5, 0.8}, 0.5));
  const auto mean = average({c1, c2});
  CHECK(mean.seeds == 2);
  CHECK(mean.jumpstart == doctest::Approx((c1.jumpstart + c2.jumpstart) / 2).epsilon(1e-15));
  CHECK(mean.asymptotic == doctest::Approx((c1.asymptotic + c2.asymptotic) / 2).epsilon(1e-15));
  CHECK(mean.final == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(mean.baseline_epoch0 == doctest::Approx(0.2).epsilon(1e-15));
  REQUIRE(mean.transferred.curve.size() == 2);
  CHECK(mean.transferred.curve[1].test_acc == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(average({}), DataError);
}

TEST_CASE("render_report examples") {
  Rng rng(2);
  std::vector<TransferComparison> three;
  for (const char* model : {"stgcn", "agcn_2s", "msg3d"}) {
    auto c = compare(model, gen::report(rng, 6), gen::report(rng, 6));
    c.plan = "config1";
    three.push_back(c);
  }
  const auto dir = gen::scratch_dir("render");
  const auto files = render_report(three, dir);
  CHECK(files.size() == 5);
  const auto table = slurp(dir / "summary.txt");
  for (const char* column : {"Final achieved performance", "Jumpstart", "Asymptotic performance"}) {
    CHECK(table.find(column) != std::string::npos);
  }
  // Header, rule and one line per comparison.
  CHECK(count(table, "\n") == 5);
  const auto rows = parse_summary_csv(slurp(dir / "summary.csv"));
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rows[i].model == three[i].model);
    CHECK(rows[i].plan == "config1");
    CHECK(std::abs(rows[i].jumpstart - three[i].jumpstart) <= 0.5e-4);
    CHECK(std::abs(rows[i].asymptotic - three[i].asymptotic) <= 0.5e-4);
    CHECK(std::abs(rows[i].final - three[i].final) <= 0.5e-4);
    CHECK(std::filesystem::exists(dir / ("curves_" + three[i].model + "_config1.svg")));
  }

  const auto single_dir = gen::scratch_dir("render_single");
  render_report({three[0]}, single_dir);
  std::size_t svgs = 0;
  for (const auto& entry : std::filesystem::directory_iterator(single_dir)) svgs += entry.path().extension() == ".svg";
  CHECK(svgs == 1);
  const auto svg = slurp(single_dir / "curves_stgcn_config1.svg");
  CHECK(count(svg, "<polyline") == 2);
  CHECK(svg.rfind("<svg", 0) == 0);

  const auto again = gen::scratch_dir("render_again");
  render_report(three, again);
  for (const auto& f : {"summary.txt", "summary.csv", "curves_msg3d_config1.svg"}) {
    CHECK(slurp(dir / f) == slurp(again / f));
  }

  CHECK_THROWS_AS(render_report({}, dir), DataError);
  CHECK_THROWS_AS(render_report({three[0], three[0]}, dir), DataError);
  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS_AS(render_report(three, dir / "blocker" / "sub"), DataError);
}

TEST_CASE("property: summary csv round-trips to the printed precision") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TransferComparison> comparisons;
    const std::size_t n = gen::between(rng, 1, 4);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = compare("m" + std::to_string(i), gen::report(rng, gen::between(rng, 1, 8), 997),
                       gen::report(rng, gen::between(rng, 1, 8), 997));
      c.plan = i % 2 ? "config2" : "config1";
      comparisons.push_back(c);
    }
    const auto rows = parse_summary_csv(summary_csv(comparisons));
    REQUIRE(rows.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = comparisons[i];
      REQUIRE(rows[i].seeds == 1);
      REQUIRE(std::abs(rows[i].final - c.final) <= 0.5e-4 + 1e-12);
      REQUIRE(std::abs(rows[i].jumpstart - c.jumpstart) <= 0.5e-4 + 1e-12);
      REQUIRE(std::abs(rows[i].asymptotic - c.asymptotic) <= 0.5e-4 + 1e-12);
      REQUIRE(std::abs(rows[i].baseline_initial - c.baseline_initial) <= 0.5e-4 + 1e-12);
      REQUIRE(std::abs(rows[i].transferred_epoch0 - c.transferred_epoch0) <= 0.5e-4 + 1e-12);
    }
  }
  CHECK_THROWS_AS(parse_summary_csv("nonsense\n"), DataError);
}
