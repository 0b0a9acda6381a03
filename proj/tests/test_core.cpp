// Copyright 2026 The RLPF Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <doctest.h>

#include "rlpf/config.hpp"
#include "rlpf/dataset_builder.hpp"
#include "rlpf/error.hpp"
#include "rlpf/io.hpp"
#include "rlpf/market_sim.hpp"
#include "rlpf/rng.hpp"

using namespace rlpf;

TEST_CASE("rng streams are reproducible and independent of tag order") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(1, "x") == derive_seed(1, "x"));
  CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("rng variates have the right moments") {
  Rng r(11);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sb = 0, sp = 0;
  for (int i = 0; i < n; ++i) {
    su += r.uniform();
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sb += static_cast<double>(r.binomial(50, 0.1));
    sp += static_cast<double>(r.poisson(3.5));
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(sb / n == doctest::Approx(5.0).epsilon(0.01));
  CHECK(sp / n == doctest::Approx(3.5).epsilon(0.01));
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
  CHECK(r.binomial(0, 0.5) == 0);
  CHECK(r.binomial(10, 1.0) == 10);
}

TEST_CASE("config parsing, typed access and canonical hash") {
  const auto a = Config::parse("# comment\nb.x = 2\na.y=hello\n\nc.z = true\n");
  const auto b = Config::parse("c.z=true\na.y = hello\nb.x=2\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.get_int("b.x", 0) == 2);
  CHECK(a.get_double("b.x", 0) == 2.0);
  CHECK(a.get_string("a.y", "") == "hello");
  CHECK(a.get_bool("c.z", false));
  CHECK(a.get_int("missing", 5) == 5);
  CHECK(a.canonical() == "a.y=hello\nb.x=2\nc.z=true\n");
  CHECK(a.hash_hex().size() == 16);
  CHECK_THROWS_AS(Config::parse("no equals sign\n"), Error);
  CHECK_THROWS_AS(a.get_int("a.y", 0), Error);
  try {
    Config::load("/nonexistent/dir/x.cfg");
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("io helpers round-trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_fixed(2.345, 2) == "2.35");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  const auto f = csv_split("x,\"a,b\",\"q\"\"q\"");
  REQUIRE(f.size() == 3);
  CHECK(f[1] == "a,b");
  CHECK(f[2] == "q\"q");
  CHECK(split_lines("a\nb\n").size() == 2);

  const auto dir = std::filesystem::temp_directory_path() / "rlpf_io_test";
  std::filesystem::create_directories(dir);
  const FileHeader h{"demo", 1, "abc", 9};
  write_file(dir / "a.csv", header_comment(h) + "x\n");
  write_file(dir / "a.jsonl", header_json(h) + "\n{}\n");
  for (const auto* name : {"a.csv", "a.jsonl"}) {
    const auto r = read_header(dir / name);
    CHECK(r.schema == "demo");
    CHECK(r.config_hash == "abc");
    CHECK(r.seed == 9);
  }
  CHECK_THROWS_AS(read_file(dir / "absent"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocabulary and text round-trip") {
  const auto v = Vocabulary::standard();
  CHECK(v.size() == 41);
  CHECK(v.symbol(v.bos()) == "<bos>");
  CHECK(v.symbol(v.eos()) == "<eos>");
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto p = write_prompt(v, rng);
    CHECK(parse_text(v, render(v, p)) == p);
    const auto w = write_variant(v, p, rng);
    for (auto t : w.ids) CHECK((t != v.bos() && t != v.eos()));
  }
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<bos>", "a", "b"}), Error);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"<bos>", "<eos>", "a", "b", "c", "d", "e", "<eos>"}), Error);
  CHECK_THROWS_AS(parse_text(v, "zzzz_not_a_token"), Error);
}

TEST_CASE("market generation is seeded and round-trips through JSON") {
  MarketConfig mc;
  mc.n_advertisers = 200;
  const auto a = generate_market(mc, 5);
  const auto b = generate_market(mc, 5);
  const auto c = generate_market(mc, 6);
  REQUIRE(a.advertisers.size() == 200);
  CHECK(a.true_model.weights == b.true_model.weights);
  CHECK(a.advertisers[17].ctr_offset == b.advertisers[17].ctr_offset);
  CHECK(a.advertisers[17].ctr_offset != c.advertisers[17].ctr_offset);
  const FileHeader h{"market", 1, "h", 5};
  const auto back = market_from_json(market_to_json(a, h));
  CHECK(back.true_model.weights == a.true_model.weights);
  CHECK(back.advertisers.size() == a.advertisers.size());
  CHECK(back.advertisers[3].vertical == a.advertisers[3].vertical);
  CHECK(back.advertisers[3].ctr_offset == a.advertisers[3].ctr_offset);
}

TEST_CASE("true CTR responds to the planted features") {
  MarketConfig mc;
  mc.n_advertisers = 10;
  const auto m = generate_market(mc, 1);
  const auto& v = m.vocab;
  const auto& adv = m.advertisers[0];
  Rng rng(2);
  const auto p = write_prompt(v, rng);
  auto plain = p;
  auto with_cta = p;
  with_cta.ids.push_back(v.roles().cta.front());
  const double d = true_logit(m.true_model, p, with_cta, adv) - true_logit(m.true_model, p, plain, adv);
  CHECK(d > 0.0);
  const double ctr = true_ctr(m.true_model, p, plain, adv);
  CHECK(ctr > 0.0);
  CHECK(ctr < 1.0);
  CHECK(true_features(m.true_model, p, plain, adv).size() == m.true_model.layout.dimension());
}

TEST_CASE("delivery conserves impressions and favors better variants") {
  const std::vector<double> ctr{0.02, 0.05};
  DeliveryPolicy uni{DeliveryPolicy::Kind::Uniform, 0.01, 8};
  DeliveryPolicy soft{DeliveryPolicy::Kind::Softmax, 0.01, 8};
  const auto u = simulate_delivery(ctr, 10000, uni, 1);
  const auto s = simulate_delivery(ctr, 10000, soft, 1);
  CHECK(u[0].impressions + u[1].impressions == 10000);
  CHECK(s[0].impressions + s[1].impressions == 10000);
  CHECK(std::abs(static_cast<double>(u[0].impressions) - 5000.0) <= 1.0);
  CHECK(s[1].impressions > s[0].impressions);
  for (const auto& d : s) CHECK(d.clicks <= d.impressions);
}

namespace {

MultitextLog small_log(std::uint64_t seed) {
  MarketConfig mc;
  mc.n_advertisers = 300;
  const auto m = generate_market(mc, seed);
  EraConfig era;
  era.impressions_median = 5000;
  return run_multitext_era(m, era, derive_seed(seed, "era"));
}

}  // namespace

TEST_CASE("multitext log is valid and serializes losslessly") {
  const auto log = small_log(4);
  REQUIRE(!log.records.empty());
  validate(log);
  const FileHeader h{"multitext", 1, "h", 4};
  const auto back = multitext_from_jsonl(multitext_to_jsonl(log, h));
  REQUIRE(back.records.size() == log.records.size());
  CHECK(back.records[5].variant == log.records[5].variant);
  CHECK(back.records[5].clicks == log.records[5].clicks);
  auto bad = log;
  bad.records[0].clicks = bad.records[0].impressions + 1;
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("pair construction orders by CTR within an ad and respects filters") {
  const auto log = small_log(8);
  FilterConfig f;
  const auto pairs = build_pairwise(log, f);
  const auto rows = build_pointwise(log, f);
  REQUIRE(!pairs.empty());
  for (const auto& p : pairs) {
    CHECK(p.ctr_w > p.ctr_l);
    CHECK(p.impressions_w >= f.min_impressions);
    CHECK(p.impressions_l >= f.min_impressions);
    CHECK(p.winner.length() >= f.min_length);
  }
  for (const auto& r : rows) CHECK(r.impressions >= f.min_impressions);

  FilterConfig strict = f;
  strict.min_impressions = 1000000;
  CHECK(build_pairwise(log, strict).empty());

  const FileHeader h{"pairs", 1, "h", 8};
  const auto back = pairs_from_jsonl(pairs_to_jsonl(pairs, h));
  REQUIRE(back.size() == pairs.size());
  CHECK(back[0].winner == pairs[0].winner);
  CHECK(back[0].ctr_w == pairs[0].ctr_w);
  const auto rb = pointwise_from_jsonl(pointwise_to_jsonl(rows, h));
  CHECK(rb.size() == rows.size());
}

TEST_CASE("splits keep advertisers disjoint and match the requested sizes") {
  std::vector<std::uint32_t> ids(101);
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto parts = split_advertisers(ids, {0.6, 0.2, 0.2}, 3);
  CHECK(parts[0].size() + parts[1].size() + parts[2].size() == 101);
  CHECK(parts[0].size() == 61);
  std::set<std::uint32_t> all;
  for (const auto& p : parts) all.insert(p.begin(), p.end());
  CHECK(all.size() == 101);

  const auto pairs = build_pairwise(small_log(9), {});
  const auto s = split_dataset(pairs, {0.6, 0.2, 0.2}, 1);
  std::set<std::uint32_t> a, b, c;
  for (const auto& p : s.train) a.insert(p.advertiser_id);
  for (const auto& p : s.eval_rm) b.insert(p.advertiser_id);
  for (const auto& p : s.holdout) c.insert(p.advertiser_id);
  for (auto id : a) {
    CHECK(b.count(id) == 0);
    CHECK(c.count(id) == 0);
  }
  for (auto id : b) CHECK(c.count(id) == 0);
  CHECK(s.train.size() + s.eval_rm.size() + s.holdout.size() == pairs.size());
}
