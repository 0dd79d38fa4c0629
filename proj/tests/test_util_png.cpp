#include <catch_amalgamated.hpp>

#include <chrono>
#include <set>

#include "objbias/errors.hpp"
#include "objbias/http.hpp"
#include "objbias/png.hpp"
#include "objbias/util.hpp"
#include "support.hpp"

using namespace objbias;

TEST_CASE("sha256 and base64 known vectors") {
  CHECK(sha256_hex(std::string_view("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string text = "foobar";
  const Bytes raw(text.begin(), text.end());
  CHECK(base64_encode(raw) == "Zm9vYmFy");
  CHECK(base64_encode(Bytes{'f'}) == "Zg==");
  CHECK(base64_decode("Zm9vYmFy") == raw);
  CHECK(stable_hash64("x") == stable_hash64("x"));
  CHECK(stable_hash64("x") != stable_hash64("y"));
}

TEST_CASE("string helpers") {
  CHECK(to_lower("NaVy") == "navy");
  CHECK(trim("  matte \n") == "matte");
}

TEST_CASE("jsonl append and rewrite") {
  testsupport::TempDir dir;
  const auto path = dir / "log.jsonl";
  CHECK(read_jsonl(path).empty());
  {
    JsonlAppender out(path);
    out.append({{"a", 1}});
    out.append({{"a", 2}});
  }
  auto lines = read_jsonl(path);
  REQUIRE(lines.size() == 2);
  CHECK(lines[1]["a"] == 2);
  write_jsonl(path, {nlohmann::json{{"b", true}}});
  lines = read_jsonl(path);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["b"] == true);
}

TEST_CASE("atomic writes replace content") {
  testsupport::TempDir dir;
  write_file_atomic(dir / "nested/f.txt", "one");
  write_file_atomic(dir / "nested/f.txt", "two");
  CHECK(read_file_text(dir / "nested/f.txt") == "two");
}

TEST_CASE("png encode and inspect") {
  std::vector<std::uint8_t> rgb(4 * 3 * 3, 0x7f);
  const auto bytes = png::encode_rgb(4, 3, rgb);
  const auto info = png::inspect(bytes);
  REQUIRE(info);
  CHECK(info->width == 4);
  CHECK(info->height == 3);
  CHECK(info->bit_depth == 8);
  CHECK(info->color_type == 2);

  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0xff;
  CHECK_FALSE(png::inspect(corrupt));
  CHECK_FALSE(png::inspect(Bytes{1, 2, 3}));
}

TEST_CASE("placeholder is a pure function of prompt and seed") {
  const auto a = png::placeholder("car for women, one product only, no people", 7);
  const auto b = png::placeholder("car for women, one product only, no people", 7);
  CHECK(a == b);
  CHECK(png::inspect(a));
  std::set<std::string> hashes;
  for (int seed = 0; seed < 40; ++seed) hashes.insert(sha256_hex(png::placeholder("car, one product only, no people", seed)));
  CHECK(hashes.size() == 40);
  CHECK(png::placeholder("cup", std::nullopt) == png::placeholder("cup", std::nullopt));
}

TEST_CASE("status classification") {
  using http::Response;
  CHECK_THROWS_AS(http::raise_for_status(Response{401, "", ""}, "svc", "KEY_ENV"), CredentialError);
  try {
    http::raise_for_status(Response{403, "", ""}, "svc", "KEY_ENV");
  } catch (const CredentialError& e) {
    CHECK(e.env_var() == "KEY_ENV");
    CHECK(std::string(e.what()).find("KEY_ENV") != std::string::npos);
  }
  CHECK_THROWS_AS(http::raise_for_status(Response{429, "", ""}, "svc", "K"), TransientError);
  CHECK_THROWS_AS(http::raise_for_status(Response{503, "", ""}, "svc", "K"), TransientError);
  CHECK_THROWS_AS(http::raise_for_status(Response{400, R"({"error":{"code":"content_policy_violation"}})", ""}, "svc", "K"),
                  ContentPolicyError);
  CHECK_THROWS_AS(http::raise_for_status(Response{404, "nope", ""}, "svc", "K"), Error);
}

TEST_CASE("retry gives up after max attempts and passes other errors through") {
  http::RetryPolicy policy{3, std::chrono::milliseconds(1), std::chrono::milliseconds(2)};
  int calls = 0;
  CHECK_THROWS_AS(http::with_retry(policy, [&](int) -> int {
                    ++calls;
                    throw TransientError("flaky");
                  }),
                  TransientError);
  CHECK(calls == 3);

  calls = 0;
  CHECK(http::with_retry(policy, [&](int attempt) {
          ++calls;
          if (attempt < 2) throw TransientError("flaky");
          return attempt;
        }) == 2);
  CHECK(calls == 2);

  calls = 0;
  CHECK_THROWS_AS(http::with_retry(policy, [&](int) -> int {
                    ++calls;
                    throw ContentPolicyError("refused");
                  }),
                  ContentPolicyError);
  CHECK(calls == 1);
}

TEST_CASE("rate limiter spaces requests") {
  http::RateLimiter limiter(600.0);  // one token per 100 ms
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) limiter.acquire();
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed >= std::chrono::milliseconds(180));
  CHECK(limiter.requests_per_minute() == Catch::Approx(600.0));
}
