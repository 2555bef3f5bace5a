#include <gtest/gtest.h>

#include <filesystem>
#include <unordered_map>

#include "helpers.hpp"
#include "nebula/novelty.hpp"
#include "nebula/rng.hpp"

namespace nebula {
namespace {

using testing::error_code;
using Kind = TtlTable::Kind;

TEST(CountMin, FreshSketchEstimatesZero) {
  const CountMinSketch s;
  EXPECT_EQ(s.estimate("x"), 0u);
  EXPECT_EQ(s.total(), 0u);
}

TEST(CountMin, NeverUndercounts) {
  CountMinSketch s;
  for (int i = 0; i < 3; ++i) s.update("x");
  EXPECT_GE(s.estimate("x"), 3u);
}

TEST(CountMin, ThousandKeysWithinBound) {
  CountMinSketch s(4, 2048);
  Rng rng(17);
  std::unordered_map<std::string, std::uint64_t> exact;
  for (int i = 0; i < 20000; ++i) {
    const std::string k = "k" + std::to_string(rng.below(1000));
    s.update(k);
    ++exact[k];
  }
  const double bound = s.epsilon() * static_cast<double>(s.total());
  std::size_t within = 0;
  for (const auto& [k, c] : exact) {
    ASSERT_GE(s.estimate(k), c);
    if (static_cast<double>(s.estimate(k) - c) <= bound) ++within;
  }
  EXPECT_GE(within, exact.size() * 99 / 100);
}

TEST(CountMin, BytesRoundTripAndCorruption) {
  CountMinSketch s;
  s.update("a", 5);
  s.update("b");
  EXPECT_EQ(CountMinSketch::from_bytes(s.to_bytes(), "mem"), s);
  auto bytes = s.to_bytes();
  bytes[bytes.size() / 2] ^= 0x40;
  EXPECT_EQ(error_code([&] { CountMinSketch::from_bytes(bytes, "mem"); }), Errc::corrupt_container);
}

TEST(Rarity, NeverSeenOnEmptySketch) { EXPECT_EQ(rarity_percentile(CountMinSketch(), "tool|net_out|remote"), 1.0); }

TEST(Rarity, DominantTriple) {
  CountMinSketch s;
  s.update("t", 100);
  EXPECT_DOUBLE_EQ(rarity_percentile(s, "t"), 1.0 - 100.0 / 101.0);
}

TEST(Rarity, MixedStreamNearExact) {
  CountMinSketch s;
  std::unordered_map<std::string, std::uint64_t> exact;
  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    const std::string k = "triple" + std::to_string(rng.below(40));
    s.update(k);
    ++exact[k];
  }
  for (const auto& [k, c] : exact) {
    const double oracle = 1.0 - static_cast<double>(c) / (1.0 + static_cast<double>(s.total()));
    const double got = rarity_percentile(s, k);
    EXPECT_LE(got, oracle + 1e-12);
    EXPECT_GE(got, oracle - s.epsilon());
  }
}

TEST(Ttl, ThreeCases) {
  TtlTable t(600000);
  const std::int64_t now = 10'000'000;
  EXPECT_EQ(ttl_novelty(t, "tool|net_out|remote", now), 1);
  t.touch(Kind::triple, "tool|net_out|remote", now - 5000);
  EXPECT_EQ(ttl_novelty(t, "tool|net_out|remote", now), 0);
  TtlTable old(600000);
  old.touch(Kind::triple, "tool|net_out|remote", now - 600001);
  EXPECT_EQ(ttl_novelty(old, "tool|net_out|remote", now), 1);
  TtlTable edge(600000);
  edge.touch(Kind::triple, "k", now - 600000);
  EXPECT_EQ(ttl_novelty(edge, "k", now), 0);
}

TEST(Ttl, TouchNeverMovesBackwards) {
  TtlTable t;
  t.touch(Kind::host, "h", 500);
  t.touch(Kind::host, "h", 100);
  EXPECT_EQ(t.last_seen(Kind::host, "h"), 500);
  EXPECT_EQ(error_code([&] { ttl_novelty(t, Kind::host, "h", 400); }), Errc::clock_regression);
}

TEST(Ttl, SaveLoad) {
  TtlTable t(1234);
  t.touch(Kind::provider_tool, provider_tool_key("evilmcp", "exfil"), 77);
  t.touch(Kind::instance, "3|invoke|9", 88);
  const auto p = std::filesystem::temp_directory_path() / "nebula_ttl_test.bin";
  t.save(p);
  EXPECT_EQ(TtlTable::load(p), t);
  std::filesystem::remove(p);
}

TEST(Ttl, NoveltyIsPureAndMonotone) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    TtlTable t(1 + static_cast<std::int64_t>(rng.below(100000)));
    const std::int64_t seen = static_cast<std::int64_t>(rng.below(1'000'000));
    t.touch(Kind::triple, "k", seen);
    const TtlTable before = t;
    const std::int64_t a = seen + static_cast<std::int64_t>(rng.below(300000));
    const std::int64_t b = a + static_cast<std::int64_t>(rng.below(300000));
    ASSERT_LE(ttl_novelty(t, "k", a), ttl_novelty(t, "k", b));
    ASSERT_EQ(t, before);
  }
}

TEST(Allowlist, Patterns) {
  const Allowlist a = Allowlist::parse("# comment\n*.example.com\nnas.local:5000\nAPI.Weather.io\n");
  EXPECT_TRUE(a.allows("cdn.example.com", 443));
  EXPECT_FALSE(a.allows("example.com", 443));
  EXPECT_FALSE(a.allows("badexample.com", 443));
  EXPECT_TRUE(a.allows("nas.local", 5000));
  EXPECT_FALSE(a.allows("nas.local", 22));
  EXPECT_TRUE(a.allows("api.weather.io", 8443));
  EXPECT_EQ(Allowlist::parse(a.to_text()).to_text(), a.to_text());
}

TEST(DstNovelty, ThreeLevels) {
  const Allowlist allow = Allowlist::parse("*.example.com\n");
  TtlTable t;
  EXPECT_EQ(dst_novelty("cdn.example.com", 443, 1000, allow, t), 0.0);

  t.touch(Kind::host, "known.net", 500);
  t.touch(Kind::host_port, host_port_key("known.net", 443), 500);
  EXPECT_EQ(dst_novelty("known.net", 8081, 1000, allow, t), 0.5);
  EXPECT_EQ(dst_novelty("known.net", 443, 1000, allow, t), 0.0);
  EXPECT_EQ(dst_novelty("evil.example", 443, 1000, allow, t), 1.0);

  const Event e = testing::net_out("n", 1000, "http_post", "Known.NET", 8081);
  EXPECT_EQ(dst_novelty(e, allow, t), 0.5);
  EXPECT_EQ(dst_novelty("known.net", 443, 500 + kDefaultTtlMs + 1, allow, t), 1.0);
}

}  // namespace
}  // namespace nebula
