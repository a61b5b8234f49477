#include <gtest/gtest.h>

#include <random>

#include "horcrux/config.hpp"
#include "horcrux/io.hpp"

using namespace horcrux;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("horcrux_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Npy, HeaderLayout) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6};
  const std::size_t shape[] = {2, 3};
  const std::string bytes = npy::encode_f32(v, shape);
  ASSERT_GE(bytes.size(), 64u + 24u);
  EXPECT_EQ(bytes.substr(0, 8), std::string("\x93NUMPY\x01\x00", 8));
  const std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                           (static_cast<unsigned char>(bytes[9]) << 8);
  EXPECT_EQ((10 + hlen) % 64, 0u);
  EXPECT_EQ(bytes[10 + hlen - 1], '\n');
  const std::string header = bytes.substr(10, hlen);
  EXPECT_NE(header.find("'descr': '<f4'"), std::string::npos);
  EXPECT_NE(header.find("'shape': (2, 3)"), std::string::npos);
  EXPECT_EQ(bytes.size(), 10 + hlen + 6 * 4);
  float first;
  std::memcpy(&first, bytes.data() + 10 + hlen, 4);
  EXPECT_EQ(first, 1.0f);
}

TEST(Npy, OneDimensionalShapeHasTrailingComma) {
  const std::vector<double> v{1, 2, 3};
  const std::size_t shape[] = {3};
  EXPECT_NE(npy::encode_f32(v, shape).find("'shape': (3,)"), std::string::npos);
}

TEST(Npy, RoundTripProperty) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> dim(1, 50);
  std::normal_distribution<double> n(0.0, 100.0);
  for (int k = 0; k < 50; ++k) {
    const std::size_t shape[] = {dim(rng), dim(rng)};
    std::vector<double> v(shape[0] * shape[1]);
    for (double& x : v) x = static_cast<double>(static_cast<float>(n(rng)));
    const npy::Array a = npy::decode(npy::encode_f32(v, shape));
    ASSERT_EQ(a.shape, (std::vector<std::size_t>{shape[0], shape[1]}));
    ASSERT_EQ(a.data, v);
  }
}

TEST(Npy, ReadsFloat64) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }";
  const std::size_t total = (10 + header.size() + 1 + 63) / 64 * 64;
  header.append(total - 10 - header.size() - 1, ' ');
  header.push_back('\n');
  std::string bytes("\x93NUMPY\x01\x00", 8);
  bytes.push_back(static_cast<char>(header.size()));
  bytes.push_back('\0');
  bytes += header;
  const double vals[] = {0.1, -2.5};
  bytes.append(reinterpret_cast<const char*>(vals), sizeof vals);
  const npy::Array a = npy::decode(bytes);
  EXPECT_EQ(a.data, (std::vector<double>{0.1, -2.5}));
}

TEST(Npy, RejectsGarbageAndUnsupportedDtype) {
  try {
    npy::decode("not numpy at all");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  std::string bytes = npy::encode_f32(std::vector<double>{1.0}, std::vector<std::size_t>{1});
  bytes.replace(bytes.find("<f4"), 3, "<i4");
  EXPECT_THROW(npy::decode(bytes), Error);
  std::string cut = npy::encode_f32(std::vector<double>{1, 2, 3}, std::vector<std::size_t>{3});
  cut.resize(cut.size() - 2);
  EXPECT_THROW(npy::decode(cut), Error);
}

TEST(SegmentFiles, RoundTripWithSidecar) {
  const fs::path dir = scratch("segment");
  const std::array<CycleParams, 1> one{reference_cycle()};
  const Segment s = synthesize_segment(one, 200.0, 4.0);
  save_segment(dir / "a.npy", s);
  ASSERT_TRUE(fs::exists(dir / "a.json"));
  const Segment back = load_segment(dir / "a.npy");
  EXPECT_EQ(back.samples.size(), 800u);
  EXPECT_EQ(back.fs, 200.0);
  EXPECT_EQ(*back.beat_times, std::vector<double>{0.4});
  ASSERT_EQ(back.cycles.size(), 1u);
  EXPECT_EQ(back.cycles[0].v2.center_freq, 23.0);
  for (std::size_t i = 0; i < 800; ++i)
    ASSERT_EQ(back.samples[i], static_cast<double>(static_cast<float>(s.samples[i])));
}

TEST(SegmentFiles, MissingSidecarUsesDefaultRate) {
  const fs::path dir = scratch("bare");
  npy::save(dir / "b.npy", std::vector<double>(400, 0.5));
  const Segment s = load_segment(dir / "b.npy", 100.0);
  EXPECT_EQ(s.fs, 100.0);
  EXPECT_FALSE(s.beat_times.has_value());
  EXPECT_DOUBLE_EQ(s.duration(), 4.0);
}

TEST(SegmentFiles, MissingFileIsIoError) {
  try {
    load_segment(scratch("missing") / "nope.npy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(SpectrogramFiles, RoundTripCalibration) {
  const fs::path dir = scratch("spec");
  Spectrogram s;
  s.values = Matrix(3, 4);
  s.values(1, 2) = 0.25;
  s.frame_rate = 50.0;
  s.freq_resolution = 0.78125;
  s.origin_time = 0.16;
  save_spectrogram(dir / "s.npy", s);
  const Spectrogram back = load_spectrogram(dir / "s.npy");
  EXPECT_EQ(back.values, s.values);
  EXPECT_EQ(back.frame_rate, 50.0);
  EXPECT_EQ(back.freq_resolution, 0.78125);
  EXPECT_EQ(back.origin_time, 0.16);
}

TEST(Png, SignatureAndDimensions) {
  Spectrogram s;
  s.values = Matrix(7, 5);
  s.values(3, 2) = 1.0;
  s.frame_rate = 1.0;
  s.freq_resolution = 1.0;
  const std::string png = encode_png(s);
  EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(png.substr(12, 4), "IHDR");
  const auto be32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(png[off + i]);
    return v;
  };
  EXPECT_EQ(be32(16), 7u);  // width = frames
  EXPECT_EQ(be32(20), 5u);  // height = bins
  EXPECT_EQ(png.substr(png.size() - 8, 4), "IEND");
}

TEST(Hash, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(BenchCsv, Format) {
  const std::vector<BenchRow> rows{{std::numeric_limits<double>::infinity(), 1.0, 1.0, 20, 20},
                                   {-5.0, 0.95, 0.7, 20, 20}};
  EXPECT_EQ(bench_csv(rows), "snr_db,rate_v1,rate_v2,n_trials\ninf,1,1,20\n-5,0.95,0.7,20\n");
}

TEST(Config, ParsesSectionsArraysAndComments) {
  const auto kv = KeyValueFile::parse(R"(
seed = 7   # global
out_dir = "runs/x"

[synth]
n_segments = 10
snr_db = inf

[aug]
proportion = 0.25
domain = "time"
placement = random

[bench]
snr_db = [inf, 10, 0, -5]
trials = 4
)");
  const RunConfig c = run_config_from(kv);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.out_dir, fs::path("runs/x"));
  EXPECT_EQ(c.synth.n_segments, 10u);
  EXPECT_TRUE(std::isinf(c.synth.snr_db));
  EXPECT_EQ(c.aug.proportion, 0.25);
  EXPECT_EQ(c.aug.domain, MaskDomain::time);
  EXPECT_EQ(c.aug.placement, MaskPlacement::random);
  ASSERT_EQ(c.bench.snr_db.size(), 4u);
  EXPECT_TRUE(std::isinf(c.bench.snr_db[0]));
  EXPECT_EQ(c.bench.snr_db[3], -5.0);
  EXPECT_EQ(c.bench.trials, 4u);
}

TEST(Config, DefaultsMatchReferenceSettings) {
  const RunConfig c = run_config_from(KeyValueFile::parse(""));
  EXPECT_EQ(c.dtm.tau, 0.5);
  EXPECT_EQ(c.aug.w_t, 24u);
  EXPECT_EQ(c.aug.w_f, 12u);
  EXPECT_EQ(c.synth.fs, 200.0);
  EXPECT_EQ(c.synth.duration, 4.0);
  EXPECT_EQ(c.split.train, 0.8);
  EXPECT_EQ(c.split.val, 0.1);
  EXPECT_EQ(c.split.test, 0.1);
  EXPECT_EQ(c.synth.n_segments, 4095u);
}

TEST(Config, Errors) {
  const auto kind_of = [](const std::string& text) {
    try {
      run_config_from(KeyValueFile::parse(text));
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::io;  // sentinel: no error
  };
  EXPECT_EQ(kind_of("sead = 3"), ErrorKind::config);
  EXPECT_EQ(kind_of("seed 3"), ErrorKind::config);
  EXPECT_EQ(kind_of("seed = 3\nseed = 4"), ErrorKind::config);
  EXPECT_EQ(kind_of("[synth\nfs = 1"), ErrorKind::config);
  EXPECT_EQ(kind_of("seed = abc"), ErrorKind::config);
  EXPECT_EQ(kind_of("seed = 1.5"), ErrorKind::config);
  EXPECT_EQ(kind_of("aug.domain = sideways"), ErrorKind::config);
  EXPECT_EQ(kind_of("aug.proportion = 0.5"), ErrorKind::io);
}

TEST(Config, ValidateCatchesBadSplit) {
  RunConfig c = run_config_from(KeyValueFile::parse("[split]\ntrain = 0.7\nval = 0.1\ntest = 0.1"));
  EXPECT_THROW(c.validate(), Error);
}
