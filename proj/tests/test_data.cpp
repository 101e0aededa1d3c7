#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "drsn/data.hpp"

using namespace drsn;
namespace fs = std::filesystem;

namespace {

std::string rows_text(std::size_t n, char sep = ' ') {
  std::string s;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      if (c) s += sep;
      s += std::to_string(static_cast<int>(t * 10 + c));
    }
    s += '\n';
  }
  return s;
}

Recording parse(const std::string& text, LoadOptions opts) {
  std::istringstream in(text);
  return parse_recording(in, "mem.txt", 0, 1, opts);
}

std::size_t error_line(const std::string& text, LoadOptions opts) {
  try {
    parse(text, opts);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("parse_recording reads whitespace and comma separated rows") {
  LoadOptions opts{.expected_timesteps = 3};
  const Recording r = parse(rows_text(3), opts);
  CHECK(r.timesteps == 3);
  CHECK(r.at(2, 1) == 12.0);
  CHECK(r.gesture_label == 1);
  const Recording rc = parse("\n" + rows_text(3, ',') + "\n\n", opts);
  CHECK(rc.values == r.values);
}

TEST_CASE("parse_recording reports the offending line") {
  LoadOptions opts{.expected_timesteps = 3};
  CHECK(error_line(rows_text(1) + "1 2 3\n" + rows_text(1), opts) == 2);
  CHECK(error_line(rows_text(2) + "1 2 3 4 5 6 7 x\n", opts) == 3);
  CHECK_THROWS_AS(parse("\n\n", opts), ParseError);
  CHECK_THROWS_AS(parse(rows_text(2), opts), ParseError);
  CHECK_THROWS_AS(parse(rows_text(4), opts), ParseError);
}

TEST_CASE("truncation mode accepts short and long recordings and flags them") {
  LoadOptions opts{.expected_timesteps = 3, .allow_truncation = true};
  const Recording shorter = parse(rows_text(2), opts);
  CHECK(shorter.truncated);
  CHECK(shorter.timesteps == 2);
  const Recording longer = parse(rows_text(5), opts);
  CHECK(longer.truncated);
  CHECK(longer.timesteps == 3);
  CHECK_FALSE(parse(rows_text(3), opts).truncated);
}

TEST_CASE("segment cuts equal contiguous windows") {
  Recording r;
  r.timesteps = 20;
  r.gesture_label = 3;
  r.subject_id = 2;
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t t = 0; t < 20; ++t) r.values.push_back(static_cast<double>(c * 100 + t));
  const auto w = segment(r, 4);
  REQUIRE(w.size() == 4);
  CHECK(w[1].window.shape() == Shape{kChannels, 5});
  CHECK(w[1].window[0] == 5.0);
  CHECK(w[3].window[1 * 5 + 4] == 119.0);
  CHECK(w[2].label == 3);
  CHECK(w[2].subject_id == 2);
  CHECK_THROWS_AS(segment(r, 3), ContractError);
  CHECK(segment(r, 3, true).size() == 3);
}

TEST_CASE("energy segmenter centres windows on active stretches") {
  Recording r;
  r.timesteps = 4000;
  r.values.assign(kChannels * 4000, 0.0);
  // Two bursts of activity; everything else is silent.
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t t = 0; t < 4000; ++t)
      if ((t >= 800 && t < 1200) || (t >= 2800 && t < 3000))
        r.values[c * 4000 + t] = (t % 2 ? 1.0 : -1.0);
  const auto w = segment_by_energy(r, 2, 200);
  REQUIRE(w.size() == 2);
  for (const auto& s : w) {
    double energy = 0.0;
    for (double v : s.window.values()) energy += v * v;
    CHECK(energy > 0.9 * kChannels * 200);
  }
}

TEST_CASE("stratified split sizes follow round(ratio * n) per label") {
  std::vector<GestureSample> samples;
  for (int label = 0; label < 8; ++label)
    for (int i = 0; i < 690; ++i)
      samples.push_back({Tensor(Shape{kChannels, 2}, static_cast<double>(i)), label, i / 10});
  const DatasetSplit s = split(samples, 0.8, 7);
  CHECK(s.train.size() == 4416);
  CHECK(s.test.size() == 1104);
  std::map<int, std::size_t> per;
  for (const auto& x : s.train) ++per[x.label];
  for (const auto& [label, n] : per) CHECK(n == 552);

  const DatasetSplit again = split(samples, 0.8, 7);
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(again.train[i].window == s.train[i].window);
  const DatasetSplit other = split(samples, 0.8, 8);
  bool differs = false;
  for (std::size_t i = 0; i < s.train.size() && !differs; ++i)
    differs = other.train[i].window != s.train[i].window;
  CHECK(differs);

  std::vector<GestureSample> tiny{{Tensor(Shape{kChannels, 2}), 0, 0}, {Tensor(Shape{kChannels, 2}), 1, 0}};
  CHECK_THROWS_AS(split(tiny, 0.2, 0), DataError);
}

TEST_CASE("normalization uses train statistics") {
  std::vector<GestureSample> train;
  for (int i = 0; i < 4; ++i) {
    Tensor w(Shape{kChannels, 3});
    for (std::size_t c = 0; c < kChannels; ++c)
      for (std::size_t t = 0; t < 3; ++t) w[c * 3 + t] = static_cast<double>(i * 3 + static_cast<int>(t) + static_cast<int>(c) * 100);
    train.push_back({w, 0, 0});
  }
  const NormalizationStats st = compute_stats(train);
  CHECK(st.mean[0] == doctest::Approx(5.5));
  CHECK(st.mean[2] == doctest::Approx(205.5));
  CHECK(st.std[1] == doctest::Approx(std::sqrt(143.0 / 12.0)));
  normalize_in_place(train, st);
  double mean = 0.0, sq = 0.0;
  for (const auto& s : train)
    for (std::size_t t = 0; t < 3; ++t) {
      mean += s.window[t];
      sq += s.window[t] * s.window[t];
    }
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sq / 12.0 == doctest::Approx(1.0));

  GestureSample flat{Tensor(Shape{kChannels, 3}, 2.0), 0, 0};
  const NormalizationStats fs = compute_stats(std::vector<GestureSample>{flat});
  for (double v : normalize(flat, fs).window.values()) CHECK(std::isfinite(v));
}

TEST_CASE("add_noise hits the requested SNR and is seed-determined") {
  const auto samples = gen_synthetic(2, 3, 400, 1);
  NoiseSpec spec{.snr_db = 5.0, .seed = 4};
  const auto noisy = add_noise(samples, spec);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      double ps = 0.0, pn = 0.0;
      for (std::size_t t = 0; t < 400; ++t) {
        const double s = samples[i].window[c * 400 + t];
        const double n = noisy[i].window[c * 400 + t] - s;
        ps += s * s;
        pn += n * n;
      }
      CHECK(10.0 * std::log10(ps / pn) == doctest::Approx(5.0).epsilon(1e-9));
    }
  }
  CHECK(add_noise(samples, spec)[3].window == noisy[3].window);
  CHECK(noisy[0].window != noisy[1].window);
  spec.snr_db = 200.0;
  const auto faint = add_noise(samples, spec);
  for (std::size_t k = 0; k < faint[0].window.size(); ++k)
    CHECK(faint[0].window[k] == doctest::Approx(samples[0].window[k]).epsilon(1e-9));
}

TEST_CASE("gen_synthetic layout and determinism") {
  const auto a = gen_synthetic(8, 20, 300, 5);
  REQUIRE(a.size() == 160);
  CHECK(a[0].label == 0);
  CHECK(a[159].label == 7);
  CHECK(a[25].label == 1);
  CHECK(a[25].subject_id == 0);
  CHECK(a[35].subject_id == 1);
  CHECK(a[0].window.shape() == Shape{kChannels, 300});
  const auto b = gen_synthetic(8, 20, 300, 5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].window == b[i].window);
  CHECK(gen_synthetic(8, 20, 300, 6)[0].window != a[0].window);
}

TEST_CASE("corpus loading from the on-disk layout") {
  const fs::path root = temp_dir("drsn_test_corpus");
  const auto recs = synthesize_recordings(3, 11);
  REQUIRE(recs.size() == 24);
  for (const auto& r : recs) {
    fs::create_directories(root / std::to_string(r.subject_id + 1) );
    write_recording(root / std::to_string(r.subject_id + 1) / (std::to_string(r.gesture_label) + ".txt"), r);
  }
  // A tenth subject sorts after the others numerically, not lexically.
  fs::copy(root / "1", root / "10", fs::copy_options::recursive);

  CorpusOptions opts;
  const Corpus all = load_corpus(root, opts);
  CHECK(all.subjects == std::vector<std::string>{"1", "2", "3", "10"});
  CHECK(all.recordings == 32);
  CHECK(all.samples.size() == 320);
  opts.max_subjects = 2;
  const Corpus two = load_corpus(root, opts);
  CHECK(two.samples.size() == 160);
  std::set<int> subjects;
  for (const auto& s : two.samples) subjects.insert(s.subject_id);
  CHECK(subjects == std::set<int>{0, 1});

  const Recording back = load_recording(root / "2" / "5.txt", 1, 5);
  CHECK(back.values == recs[1 * 8 + 5].values);

  fs::remove(root / "3" / "4.txt");
  opts.max_subjects = 0;
  try {
    load_corpus(root, opts);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("4.txt") != std::string::npos);
  }
  CHECK_THROWS_AS(load_corpus(root / "missing"), DataError);
  fs::remove_all(root);
}
