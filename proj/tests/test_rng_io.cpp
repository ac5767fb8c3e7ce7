#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "beamtrack/io.hpp"
#include "beamtrack/rng.hpp"

using namespace beamtrack;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("beamtrack_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("rng_io") {
  TEST_CASE("rng is deterministic per seed and seed-sensitive") {
    Rng a(42), b(42), c(43);
    bool diverged = false;
    for (int i = 0; i < 100; ++i) {
      const uint64_t va = a.next_u64();
      CHECK(va == b.next_u64());
      diverged = diverged || va != c.next_u64();
    }
    CHECK(diverged);
  }

  TEST_CASE("uniform stays in [0,1) and fills the range") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double u = rng.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
  }

  TEST_CASE("uniform_int covers inclusive bounds without escaping them") {
    Rng rng(3);
    std::set<int64_t> seen;
    for (int i = 0; i < 5000; ++i) {
      const int64_t v = rng.uniform_int(-2, 5);
      CHECK(v >= -2);
      CHECK(v <= 5);
      seen.insert(v);
    }
    CHECK(seen.size() == 8);
  }

  TEST_CASE("normal matches standard moments") {
    Rng rng(11);
    const int n = 50000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.normal();
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
  }

  TEST_CASE("mix derives distinct deterministic subseeds") {
    CHECK(Rng::mix(1, 0) == Rng::mix(1, 0));
    CHECK(Rng::mix(1, 0) != Rng::mix(1, 1));
    CHECK(Rng::mix(1, 0) != Rng::mix(2, 0));
    std::set<uint64_t> streams;
    for (uint64_t s = 0; s < 256; ++s)
      streams.insert(Rng::mix(99, s));
    CHECK(streams.size() == 256);
  }

  TEST_CASE("state round-trip resumes the exact stream") {
    Rng rng(5);
    for (int i = 0; i < 17; ++i)
      rng.normal();
    const std::string snap = rng.state();

    Rng restored(0);
    restored.set_state(snap);
    for (int i = 0; i < 50; ++i)
      CHECK(rng.next_u64() == restored.next_u64());

    Rng bad(0);
    CHECK_THROWS_AS(bad.set_state("not a state"), CheckpointError);
  }

  TEST_CASE("shuffled_indices is a seeded permutation") {
    Rng a(9), b(9), c(10);
    const auto pa = shuffled_indices(100, a);
    const auto pb = shuffled_indices(100, b);
    const auto pc = shuffled_indices(100, c);
    CHECK(pa == pb);
    CHECK(pa != pc);
    std::set<size_t> seen(pa.begin(), pa.end());
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);
  }

  TEST_CASE("fnv1a matches published test vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("config_hash ignores key insertion order, not values") {
    json a, b;
    a["x"] = 1;
    a["y"] = json{{"p", 2.5}, {"q", "s"}};
    b["y"]["q"] = "s";
    b["y"]["p"] = 2.5;
    b["x"] = 1;
    CHECK(config_hash(a) == config_hash(b));

    json c = a;
    c["x"] = 2;
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
  }

  TEST_CASE("json and text files round-trip") {
    const fs::path dir = temp_dir("io_files");
    const json j = {{"k", 1}, {"nested", {{"v", 0.25}}}};
    write_json_file(dir / "a.json", j);
    CHECK(read_json_file(dir / "a.json") == j);

    write_text_file(dir / "t.txt", "line1\nline2");
    CHECK(read_text_file(dir / "t.txt") == "line1\nline2");

    CHECK_THROWS_AS(read_json_file(dir / "missing.json"), DataError);
    write_text_file(dir / "bad.json", "{not json");
    CHECK_THROWS_AS(read_json_file(dir / "bad.json"), DataError);
  }

  TEST_CASE("blob container round-trips meta and payload") {
    const fs::path dir = temp_dir("io_blob");
    const json meta = {{"kind", "test"}, {"dims", {2, 3}}};
    const std::vector<double> payload = {1.5, -2.0, 0.0, 1e-300, 3.25, 6.0};
    write_blob(dir / "x.blob", meta, payload);

    const BlobFile blob = read_blob(dir / "x.blob");
    CHECK(blob.payload == payload);
    CHECK(blob.meta.at("kind") == "test");
    CHECK(blob.meta.at("payload_count") == payload.size());

    // Truncate the payload and expect a detected error.
    {
      std::ifstream in(dir / "x.blob", std::ios::binary);
      std::string all((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
      std::ofstream out(dir / "trunc.blob", std::ios::binary);
      out.write(all.data(), static_cast<std::streamsize>(all.size() - 8));
    }
    CHECK_THROWS_AS(read_blob(dir / "trunc.blob"), DataError);
  }

  TEST_CASE("pack_mat/unpack_mat preserve row-major layout") {
    Mat m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    std::vector<double> payload;
    pack_mat(payload, m);
    CHECK(payload == std::vector<double>{1, 2, 3, 4, 5, 6});

    size_t pos = 0;
    const Mat back = unpack_mat(payload, pos, 2, 3);
    CHECK(pos == 6);
    CHECK(back == m);

    size_t over = 0;
    CHECK_THROWS_AS(unpack_mat(payload, over, 3, 3), CheckpointError);
  }
}
