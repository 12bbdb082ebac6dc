#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "bundle_fixture.hpp"
#include "helpers.hpp"
#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/service/api.hpp"

using namespace tracseg;
using namespace tracseg::service;
using nlohmann::json;

namespace {

const ApiService& api() {
  static ApiService service(artifacts::Bundle::open(testing::sealed_bundle()));
  return service;
}

json get_json(const std::string& path, const Query& query = {}, int expected = 200) {
  const auto r = api().handle(path, query);
  REQUIRE(r.status == expected);
  CHECK(r.content_type == "application/json");
  return json::parse(r.body);
}

// First test region with at least `n` ranked entries.
std::pair<std::string, int> ranked_region(std::size_t n) {
  for (const auto& e : artifacts::Bundle::open(testing::sealed_bundle()).explanations())
    if (e.ranking.size() >= n) return {e.test_image_id, e.test_class};
  return {};
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("meta and image listings") {
  const auto meta = get_json("/api/meta");
  CHECK(meta.at("class_names").size() == 4);
  CHECK(meta.contains("threshold"));
  const auto test = get_json("/api/images").at("images");
  const auto all = get_json("/api/images", {{"split", "all"}}).at("images");
  CHECK(test.size() < all.size());
  CHECK(all.size() == 40);
  get_json("/api/images", {{"split", "nope"}}, 400);
  const std::string id = test.at(0).at("id");
  const auto one = get_json("/api/images/" + id);
  CHECK(one.at("id") == id);
  get_json("/api/images/not-an-image", {}, 404);
  get_json("/api/nothing", {}, 404);
}

TEST_CASE("image renditions are PNGs") {
  const std::string id = get_json("/api/images").at("images").at(0).at("id");
  for (const char* kind : {"channel0", "thumbnail", "gt", "pred"}) {
    const auto r = api().handle("/api/images/" + id + "/" + kind + ".png", {});
    REQUIRE(r.status == 200);
    CHECK(r.content_type == "image/png");
    CHECK(r.body.substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
  }
  CHECK(api().handle("/api/images/" + id + "/channel9.png", {}).status == 404);
}

TEST_CASE("explanation endpoint honors top and matches the CSV export") {
  const auto [id, cls] = ranked_region(10);
  REQUIRE_FALSE(id.empty());
  const auto path = "/api/explanations/" + id + "/" + std::to_string(cls);
  const auto body = get_json(path, {{"top", "10"}});
  CHECK(body.at("proponents").size() == 10);
  CHECK(body.at("opponents").size() == 10);
  CHECK(body.at("dimension") == 3 * 20);
  CHECK_FALSE(body.at("truncated").get<bool>());

  // CSV rows of this region in ranking order
  const auto rows = read_csv(testing::sealed_bundle() / "explanations" / "explanations.csv");
  const auto& header = rows.front();
  auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  std::vector<std::pair<std::string, double>> csv;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row[col("test_id")] != id || std::stoi(row[col("test_class")]) != cls || row[col("is_null")] != "0") continue;
    CHECK(std::stoul(row[col("rank")]) == csv.size() + 1);
    csv.emplace_back(row[col("train_id")] + "/" + row[col("train_class")], std::stod(row[col("score")]));
  }
  REQUIRE(csv.size() >= 10);
  for (std::size_t r = 0; r < 10; ++r) {
    const auto& p = body.at("proponents").at(r);
    CHECK(p.at("rank") == r + 1);
    CHECK(p.at("train_id").get<std::string>() + "/" + std::to_string(p.at("train_class").get<int>()) == csv[r].first);
    CHECK(p.at("score").get<double>() == doctest::Approx(csv[r].second).epsilon(1e-9));
  }
  CHECK(body.at("opponents").at(0).at("train_id").get<std::string>() + "/" +
            std::to_string(body.at("opponents").at(0).at("train_class").get<int>()) ==
        csv.back().first);

  const auto hidden = get_json(path, {{"top", "10"}, {"hide_global", "true"}});
  for (const auto& p : hidden.at("proponents")) CHECK_FALSE(p.at("is_global_explainer").get<bool>());
  const auto many = get_json(path, {{"top", "1000"}});
  CHECK(many.at("truncated").get<bool>());
  get_json(path, {{"top", "0"}}, 400);
  get_json(path, {{"hide_global", "maybe"}}, 400);
  get_json("/api/explanations/" + id + "/7", {}, 404);
  get_json("/api/explanations/nobody/1", {}, 404);
}

TEST_CASE("matrix and feature endpoints") {
  const auto m = get_json("/api/matrix/1");
  const auto& values = m.at("values");
  CHECK(values.size() == 20);
  CHECK(values.at(0).size() == 60);
  const auto small = get_json("/api/matrix/1", {{"downsample", "4"}});
  CHECK(small.at("values").size() == 5);
  CHECK(small.at("values").at(0).size() == 15);
  get_json("/api/matrix/1", {{"downsample", "-1"}}, 400);
  get_json("/api/matrix/0", {}, 404);
  const auto f = get_json("/api/features/2");
  CHECK(f.contains("curves"));
}

TEST_CASE("HTTP layer: CORS, ETag revalidation and read-only methods") {
  httplib::Server server;
  testing::TempDir assets;
  std::ofstream(assets / "index.html") << "<html>explorer</html>";
  mount(server, api(), {"127.0.0.1", 0, assets.path(), "*"});
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto first = client.Get("/api/meta");
  REQUIRE(first);
  CHECK(first->status == 200);
  CHECK(first->get_header_value("Access-Control-Allow-Origin") == "*");
  const auto tag = first->get_header_value("ETag");
  CHECK(tag == api().etag());
  const auto again = client.Get("/api/meta", {{"If-None-Match", tag}});
  REQUIRE(again);
  CHECK(again->status == 304);
  CHECK(again->body.empty());
  const auto stale = client.Get("/api/meta", {{"If-None-Match", "\"other\""}});
  CHECK(stale->status == 200);
  const auto post = client.Post("/api/meta", "{}", "application/json");
  REQUIRE(post);
  CHECK(post->status == 405);
  const auto missing = client.Get("/api/images/nope");
  CHECK(missing->status == 404);
  const auto page = client.Get("/index.html");
  REQUIRE(page);
  CHECK(page->body.find("explorer") != std::string::npos);

  server.stop();
  worker.join();
}

}
