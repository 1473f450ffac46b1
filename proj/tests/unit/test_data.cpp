#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "langtime/data/csv.hpp"
#include "langtime/data/normalize.hpp"
#include "langtime/data/split.hpp"
#include "langtime/data/synthetic.hpp"
#include "langtime/data/windows.hpp"

using namespace langtime::data;

namespace {

SeriesFrame Ramp(std::int64_t t_len, std::int64_t c_len) {
  std::vector<Timestamp> ts;
  std::vector<double> v;
  for (std::int64_t t = 0; t < t_len; ++t) {
    ts.push_back(1'600'000'000 + t * 3600);
    for (std::int64_t c = 0; c < c_len; ++c) v.push_back(static_cast<double>(t * 10 + c));
  }
  std::vector<std::string> ids;
  for (std::int64_t c = 0; c < c_len; ++c) ids.push_back("c" + std::to_string(c));
  return SeriesFrame("ramp", ids, ts, v);
}

}  // namespace

TEST_CASE("timestamps parse in both accepted layouts") {
  CHECK(ParseTimestamp("1970-01-01 00:00:00") == 0);
  CHECK(ParseTimestamp("2016-07-01 01:00:00") == ParseTimestamp("2016-07-01T01:00:00Z"));
  CHECK(ParseTimestamp("2016-07-01") + 3600 == ParseTimestamp("2016-07-01 01:00"));
  CHECK_THROWS_AS(ParseTimestamp("2016-13-01 00:00:00"), DataError);
  CHECK_THROWS_AS(ParseTimestamp("yesterday"), DataError);
  CHECK(FormatTimestamp(ParseTimestamp("2020-02-29 13:45:07")) == "2020-02-29 13:45:07");
  // 2020-01-01 was a Wednesday.
  CHECK(DayOfWeek(ParseTimestamp("2020-01-01 05:00:00")) == 2);
  CHECK(HourOfDay(ParseTimestamp("2020-01-01 05:00:00")) == 5);
}

TEST_CASE("csv ingestion") {
  SUBCASE("toy file") {
    std::istringstream in("date,a,b\n2020-01-01 00:00:00,1,2\n2020-01-01 01:00:00,3,4\n"
                          "2020-01-01 02:00:00,5,6\n");
    auto r = ParseCsv(in, {MissingPolicy::kReject, "toy"});
    CHECK(r.frame.length() == 3);
    CHECK(r.frame.channels() == 2);
    CHECK(r.frame.at(2, 1) == 6.0);
    CHECK(r.rows_read == 3);
    CHECK(r.rows_dropped == 0);
    CHECK(r.frame.frequency_label() == "hourly");
  }
  SUBCASE("blank cell rejected with its line") {
    std::istringstream in("date,a,b\n2020-01-01 00:00:00,1,2\n2020-01-01 01:00:00,,4\n");
    try {
      ParseCsv(in, {});
      FAIL("expected an error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("blank cell forward-filled and counted") {
    std::istringstream in("date,a\n2020-01-01 00:00:00,\n2020-01-01 01:00:00,1\n"
                          "2020-01-01 02:00:00,\n");
    auto r = ParseCsv(in, {MissingPolicy::kForwardFill, "x"});
    CHECK(r.rows_dropped == 1);
    CHECK(r.cells_filled == 1);
    CHECK(r.frame.length() == 2);
    CHECK(r.frame.at(1, 0) == 1.0);
  }
  SUBCASE("bad timestamp and non-numeric cell") {
    std::istringstream bad_ts("date,a\n2020-01-01 00:00:00,1\nnot-a-date,2\n");
    CHECK_THROWS_WITH_AS(ParseCsv(bad_ts, {}), doctest::Contains("line 3"), DataError);
    std::istringstream bad_cell("date,a,b\n2020-01-01 00:00:00,1,x\n");
    CHECK_THROWS_WITH_AS(ParseCsv(bad_cell, {}), doctest::Contains("line 2, column b"),
                         DataError);
  }
  SUBCASE("ETTh1 layout") {
    const auto path = std::filesystem::temp_directory_path() / "ETTh1.csv";
    {
      std::ofstream out(path);
      out << "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n";
      for (int h = 0; h < 48; ++h) {
        out << FormatTimestamp(ParseTimestamp("2016-07-01 00:00:00") + h * 3600);
        for (int c = 0; c < 7; ++c) out << ',' << (h * 0.5 + c);
        out << '\n';
      }
    }
    auto r = IngestCsv(path);
    CHECK(r.frame.channels() == 7);
    CHECK(r.frame.frequency_label() == "hourly");
    CHECK(r.frame.dataset_id() == "ETTh1");
    CHECK(r.frame.channel_ids().back() == "OT");
    std::filesystem::remove(path);
  }
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.seed = 7;
  spec.length = 500;
  CHECK(GenerateSynthetic(spec).values() == GenerateSynthetic(spec).values());

  SUBCASE("noise-free series is periodic plus linear") {
    spec.noise_sigma = 0.0;
    spec.periods = {10.0, 20.0};
    spec.trend_slope = 0.01;
    auto f = GenerateSynthetic(spec);
    for (std::int64_t t = 0; t + 20 < f.length(); ++t) {
      for (std::int64_t c = 0; c < f.channels(); ++c) {
        CHECK(f.at(t + 20, c) - f.at(t, c) == doctest::Approx(0.2).epsilon(1e-9));
      }
    }
  }
  SUBCASE("AR(1) residual autocorrelation") {
    spec.length = 10000;
    spec.channels = 1;
    spec.ar_coeff = 0.9;
    spec.noise_sigma = 0.1;
    auto noisy = GenerateSynthetic(spec);
    auto clean_spec = spec;
    clean_spec.noise_sigma = 0.0;
    auto clean = GenerateSynthetic(clean_spec);
    std::vector<double> r(noisy.length());
    double mean = 0;
    for (std::int64_t t = 0; t < noisy.length(); ++t) {
      r[t] = noisy.at(t, 0) - clean.at(t, 0);
      mean += r[t];
    }
    mean /= static_cast<double>(r.size());
    double num = 0, den = 0;
    for (std::size_t t = 0; t < r.size(); ++t) {
      den += (r[t] - mean) * (r[t] - mean);
      if (t > 0) num += (r[t] - mean) * (r[t - 1] - mean);
    }
    const double rho = num / den;
    CHECK(rho >= 0.8);
    CHECK(rho <= 0.95);
  }
  SUBCASE("key-value section") {
    auto parsed = ParseSyntheticSpec({{"channels", "2"}, {"periods", "12,48"},
                                      {"amplitudes", "1,2"}, {"noise_sigma", "0"}});
    CHECK(parsed.channels == 2);
    CHECK(parsed.periods == std::vector<double>{12, 48});
    CHECK_THROWS_AS(ParseSyntheticSpec({{"bogus", "1"}}), DataError);
  }
}

TEST_CASE("chronological split") {
  auto b = SplitBoundaries(1000, SplitSpec{});
  CHECK(b[0].size() == 560);
  CHECK(b[1].size() == 140);
  CHECK(b[2].size() == 100);
  CHECK(b[3].size() == 200);

  auto ett = SplitBoundaries(1000, SplitSpec::EttStyle());
  // Independent: 60% train split 8:2, then 20% / 20%.
  CHECK(ett[0].begin == 0);
  CHECK(ett[0].end == 480);
  CHECK(ett[1].end == 600);
  CHECK(ett[2].end == 800);
  CHECK(ett[3].end == 1000);

  for (std::int64_t t_len : {200, 333, 1000, 4001}) {
    auto frame = Ramp(t_len, 2);
    auto s = ChronologicalSplit(frame, SplitSpec{}, 10);
    CHECK(s.pretrain.timestamps().back() < s.finetune.timestamps().front());
    CHECK(s.finetune.timestamps().back() < s.val.timestamps().front());
    CHECK(s.val.timestamps().back() < s.test.timestamps().front());
    std::set<Timestamp> seen;
    std::size_t total = 0;
    for (auto seg : {Segment::kPretrain, Segment::kFinetune, Segment::kVal, Segment::kTest}) {
      for (auto ts : s.get(seg).timestamps()) seen.insert(ts);
      total += s.get(seg).timestamps().size();
    }
    CHECK(seen.size() == total);
    CHECK(static_cast<std::int64_t>(total) == t_len);
  }

  CHECK_THROWS_WITH_AS(ChronologicalSplit(Ramp(100, 1), SplitSpec{}, 20),
                       doctest::Contains("finetune split"), DataError);
  CHECK_THROWS_WITH_AS(ChronologicalSplit(Ramp(190, 1), SplitSpec{}, 20),
                       doctest::Contains("val split"), DataError);
  CHECK_THROWS_AS(SplitBoundaries(100, SplitSpec{0.5, 0.2, 0.2, 0.8}), DataError);
}

TEST_CASE("normalization") {
  std::vector<Timestamp> ts = {0, 1, 2, 3};
  SeriesFrame train("d", {"a", "k"}, ts, {3, 1, 7, 1, 3, 1, 7, 1});
  auto stats = ComputeStats(train);
  CHECK(stats.mean[0] == 5.0);
  CHECK(stats.std[0] == 2.0);
  CHECK(stats.warnings.size() == 1);

  SeriesFrame probe("d", {"a", "k"}, {10}, {9, 1});
  auto norm = Normalize(probe, stats);
  CHECK(norm.at(0, 0) == 2.0);
  CHECK(norm.at(0, 1) == 0.0);

  auto big = GenerateSynthetic(SyntheticSpec{});
  auto split = ChronologicalSplit(big, SplitSpec{}, 100);
  auto s1 = ComputeStats(split.pretrain);
  auto round = Denormalize(Normalize(split.test, s1), s1);
  for (std::size_t i = 0; i < round.values().size(); ++i) {
    CHECK(std::abs(round.values()[i] - split.test.values()[i]) < 1e-10);
  }

  // Stats come from the training segment only: perturbing test values leaves
  // them bit-identical.
  std::vector<double> v = big.values();
  for (std::int64_t i = split.bounds[3].begin * big.channels(); i < static_cast<std::int64_t>(v.size()); ++i) {
    v[i] += 100.0;
  }
  auto perturbed = ChronologicalSplit(big.WithValues(v), SplitSpec{}, 100);
  auto s2 = ComputeStats(perturbed.pretrain);
  CHECK(s1.mean == s2.mean);
  CHECK(s1.std == s2.std);
}

TEST_CASE("windows") {
  auto frame = Ramp(300, 2);
  auto w = MakeWindows(frame, 96, 96, 1, 24);
  CHECK(w.size() == 218);
  CHECK(w.input_length() / 24 == 4);
  CHECK_THROWS_WITH_AS(MakeWindows(frame, 95, 96, 1, 24), doctest::Contains("multiple"),
                       DataError);

  auto batch = w.Batch(std::vector<std::int64_t>{0, 109, 217});
  CHECK(batch.refs[1].channel == 1);
  CHECK(batch.refs[1].start == 0);
  // Target follows input without gap or overlap.
  for (std::int64_t b = 0; b < batch.size(); ++b) {
    CHECK(batch.target(b)[0] - batch.input(b)[95] == 10.0);
  }
  CHECK(batch.refs[2].start == 108);

  // Count formula against brute-force enumeration.
  for (std::int64_t t_len = 1; t_len <= 500; t_len += 7) {
    for (std::int64_t l : {8, 16, 48}) {
      for (std::int64_t f : {1, 8, 30}) {
        for (std::int64_t stride : {1, 3, 8}) {
          std::int64_t brute = 0;
          for (std::int64_t s = 0; s + l + f <= t_len; s += stride) ++brute;
          CHECK(WindowCount(t_len, 3, l, f, stride) == 3 * brute);
        }
      }
    }
  }
}
