#include "tracseg/service/api.hpp"

#include <charconv>
#include <cmath>

#include <httplib.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracseg/common/errors.hpp"
#include "tracseg/render/png.hpp"

namespace tracseg::service {

namespace {

Response json_response(const nlohmann::json& body, int status = 200) {
  return {status, "application/json", body.dump()};
}

Response error(int status, const std::string& code, const std::string& message) {
  return json_response({{"error", code}, {"status", status}, {"message", message}}, status);
}

Response not_found(const std::string& message) { return error(404, "not_found", message); }
Response bad_request(const std::string& message) { return error(400, "bad_request", message); }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto end = path.find('/', start);
    const auto part = path.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!part.empty()) parts.push_back(part);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return parts;
}

const std::string* query_value(const Query& query, const std::string& key) {
  const auto it = query.find(key);
  return it == query.end() ? nullptr : &it->second;
}

std::optional<long> parse_int(const std::string& text) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<bool> parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  return std::nullopt;
}

nlohmann::json nullable(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

ApiService::ApiService(artifacts::Bundle bundle)
    : bundle_(std::move(bundle)), splits_(bundle_.dataset()), globals_(bundle_.global_explainers()), eval_(bundle_.eval()) {
  for (auto& e : bundle_.explanations()) {
    auto key = std::make_pair(e.test_image_id, e.test_class);
    explanations_.emplace(std::move(key), std::move(e));
  }
}

const data::Sample* ApiService::find_image(const std::string& id, data::Split* split) const {
  for (auto sp : {data::Split::train, data::Split::val, data::Split::test}) {
    if (const auto* s = splits_.get(sp).find(id)) {
      if (split) *split = sp;
      return s;
    }
  }
  return nullptr;
}

int ApiService::parse_class(const std::string& text) const {
  const auto v = parse_int(text);
  if (!v || *v < 1 || *v > splits_.n_foreground_classes()) return 0;
  return static_cast<int>(*v);
}

nlohmann::json ApiService::describe(const data::Sample& s, data::Split split) const {
  std::vector<int> present;
  for (int c = 1; c <= splits_.n_foreground_classes(); ++c)
    if (s.mask.contains(c)) present.push_back(c);
  const std::string base = "/api/images/" + s.image.id;
  return {{"id", s.image.id},
          {"patient_id", s.image.patient_id},
          {"slice_index", s.image.slice_index},
          {"split", data::to_string(split)},
          {"height", s.image.height},
          {"width", s.image.width},
          {"classes_present", present},
          {"thumbnail", base + "/thumbnail.png"}};
}

Response ApiService::meta() const {
  const auto& m = bundle_.manifest();
  return json_response({{"format_version", m.at("format_version")},
                        {"tool_version", m.at("tool_version")},
                        {"created", m.at("created")},
                        {"dataset_sha", m.at("dataset_sha")},
                        {"checkpoint_run", m.at("checkpoint_run")},
                        {"selected_epochs", m.at("selected_epochs")},
                        {"threshold", m.at("threshold")},
                        {"grad_scope", m.value("grad_scope", "all")},
                        {"class_names", splits_.class_names},
                        {"channels", splits_.channels()},
                        {"counts", {{"train", splits_.train.n()}, {"val", splits_.val.n()}, {"test", splits_.test.n()}}},
                        {"eval", eval_},
                        {"global_explainers",
                         {{"k", globals_.k()}, {"threshold", globals_.threshold()}, {"n_flagged", globals_.flagged().size()}}},
                        {"kinds", [&] {
                           nlohmann::json k = nlohmann::json::object();
                           for (const auto& [name, entry] : m.at("kinds").items()) k[name] = entry.at("sha");
                           return k;
                         }()}});
}

Response ApiService::images(const Query& query) const {
  std::string split = "test";
  if (const auto* v = query_value(query, "split")) split = *v;
  std::vector<data::Split> wanted;
  if (split == "all") {
    wanted = {data::Split::train, data::Split::val, data::Split::test};
  } else {
    bool ok = false;
    for (auto sp : {data::Split::train, data::Split::val, data::Split::test})
      if (data::to_string(sp) == split) wanted = {sp}, ok = true;
    if (!ok) return bad_request("split must be one of train, val, test, all");
  }
  nlohmann::json list = nlohmann::json::array();
  for (auto sp : wanted)
    for (const auto& s : splits_.get(sp).items) list.push_back(describe(s, sp));
  return json_response({{"split", split}, {"images", list}});
}

Response ApiService::image(const std::string& id) const {
  data::Split split{};
  const auto* s = find_image(id, &split);
  if (!s) return not_found("unknown image '" + id + "'");
  auto j = describe(*s, split);
  const std::string base = "/api/images/" + id;
  std::vector<std::string> channels;
  for (int c = 0; c < s->image.channels; ++c) channels.push_back(fmt::format("{}/channel{}.png", base, c));
  j["channels"] = channels;
  j["ground_truth"] = base + "/gt.png";
  j["prediction"] = base + "/pred.png";
  j["palette"] = [] {
    nlohmann::json p = nlohmann::json::array();
    for (const auto& c : render::mask_palette()) p.push_back(fmt::format("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]));
    return p;
  }();
  return json_response(j);
}

Response ApiService::image_png(const std::string& id, const std::string& kind) const {
  const auto* s = find_image(id);
  if (!s) return not_found("unknown image '" + id + "'");
  const auto key = std::make_pair(id, kind);
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = png_cache_.find(key); it != png_cache_.end()) return {200, "image/png", it->second};
  }
  const auto& im = s->image;
  const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
  std::string png;
  auto channel_png = [&](int c) {
    std::span<const float> values(im.values.data() + c * plane, plane);
    const auto gray = render::to_gray8(values);
    return render::encode_png_gray(im.width, im.height, gray);
  };
  auto mask_png = [&](const std::vector<std::uint8_t>& labels) {
    const auto& palette = render::mask_palette();
    std::vector<std::uint8_t> alpha(palette.size(), 255);
    alpha[0] = 0;
    return render::encode_png_indexed(im.width, im.height, labels, palette, alpha);
  };
  if (kind.rfind("channel", 0) == 0) {
    const auto c = parse_int(kind.substr(7));
    if (!c || *c < 0 || *c >= im.channels) return not_found("unknown channel '" + kind + "'");
    png = channel_png(static_cast<int>(*c));
  } else if (kind == "thumbnail") {
    png = channel_png(std::min(im.channels - 1, 3));
  } else if (kind == "gt") {
    png = mask_png(s->mask.labels);
  } else if (kind == "pred") {
    png = mask_png(bundle_.prediction(id));
  } else {
    return not_found("unknown image resource '" + kind + "'");
  }
  std::lock_guard lock(cache_mutex_);
  png_cache_.emplace(key, png);
  return {200, "image/png", png};
}

Response ApiService::explanation(const std::string& id, const std::string& cls_text, const Query& query) const {
  long top = 10;
  bool hide = false;
  if (const auto* v = query_value(query, "top")) {
    const auto t = parse_int(*v);
    if (!t || *t < 1) return bad_request("top must be a positive integer");
    top = *t;
  }
  if (const auto* v = query_value(query, "hide_global")) {
    const auto b = parse_bool(*v);
    if (!b) return bad_request("hide_global must be true or false");
    hide = *b;
  }
  const int cls = parse_class(cls_text);
  if (cls == 0) return not_found("unknown class '" + cls_text + "'");
  const auto it = explanations_.find({id, cls});
  if (it == explanations_.end()) return not_found("no explanation for image '" + id + "'");
  const auto& e = it->second;
  const auto order = e.filtered_ranking(hide ? &globals_ : nullptr);
  const std::size_t k = static_cast<std::size_t>(top);
  auto entry = [&](std::size_t rank, std::size_t idx) {
    const auto& s = e.scores[idx];
    return nlohmann::json{{"rank", rank},
                          {"train_id", s.train_image_id},
                          {"train_class", s.train_class},
                          {"score", *s.value},
                          {"is_global_explainer", globals_.contains(s.train_image_id, s.train_class)},
                          {"thumbnail", "/api/images/" + s.train_image_id + "/thumbnail.png"}};
  };
  nlohmann::json proponents = nlohmann::json::array(), opponents = nlohmann::json::array();
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    proponents.push_back(entry(r + 1, order[r]));
    opponents.push_back(entry(order.size() - r, order[order.size() - 1 - r]));
  }
  return json_response({{"test_id", e.test_image_id},
                        {"test_class", e.test_class},
                        {"top", top},
                        {"hide_global", hide},
                        {"dimension", e.dimension()},
                        {"n_ranked", order.size()},
                        {"region_present", !e.ranking.empty()},
                        {"truncated", order.size() < k},
                        {"proponents", proponents},
                        {"opponents", opponents}});
}

Response ApiService::matrix(const std::string& cls_text, const Query& query) const {
  long d = 1;
  if (const auto* v = query_value(query, "downsample")) {
    const auto t = parse_int(*v);
    if (!t || *t < 1) return bad_request("downsample must be a positive integer");
    d = *t;
  }
  const int cls = parse_class(cls_text);
  if (cls == 0) return not_found("unknown class '" + cls_text + "'");
  const auto m = bundle_.matrix(cls);
  const std::size_t ds = static_cast<std::size_t>(d);
  const std::size_t tr = (m.rows + ds - 1) / ds, tc = (m.cols + ds - 1) / ds;
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t r = 0; r < tr; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < tc; ++c) {
      double sum = 0;
      int count = 0;
      for (std::size_t y = r * ds; y < std::min(m.rows, (r + 1) * ds); ++y)
        for (std::size_t x = c * ds; x < std::min(m.cols, (c + 1) * ds); ++x)
          if (!m.null_mask[y * m.cols + x]) sum += m.values[y * m.cols + x], ++count;
      row.push_back(count ? nlohmann::json(sum / count) : nlohmann::json(nullptr));
    }
    values.push_back(std::move(row));
  }
  std::vector<double> boundaries;
  for (int j = 1; j < m.n_classes; ++j) boundaries.push_back(static_cast<double>(j * m.rows) / static_cast<double>(ds));
  nlohmann::json blocks = nlohmann::json::array();
  for (int j = 1; j <= m.n_classes; ++j) blocks.push_back(nullable(m.block_mean(j)));
  return json_response({{"class", cls},
                        {"rows", m.rows},
                        {"cols", m.cols},
                        {"n_classes", m.n_classes},
                        {"downsample", d},
                        {"tile_rows", tr},
                        {"tile_cols", tc},
                        {"block_boundaries", boundaries},
                        {"block_means", blocks},
                        {"row_ids", m.image_ids},
                        {"values", values}});
}

Response ApiService::features(const std::string& cls_text) const {
  const int cls = parse_class(cls_text);
  if (cls == 0) return not_found("unknown class '" + cls_text + "'");
  return json_response(bundle_.features(cls));
}

Response ApiService::handle(const std::string& path, const Query& query) const {
  const auto p = split_path(path);
  try {
    if (p.size() < 2 || p[0] != "api") return not_found("no route for " + path);
    if (p[1] == "meta" && p.size() == 2) return meta();
    if (p[1] == "images") {
      if (p.size() == 2) return images(query);
      if (p.size() == 3) return image(p[2]);
      if (p.size() == 4 && p[3].size() > 4 && p[3].ends_with(".png"))
        return image_png(p[2], p[3].substr(0, p[3].size() - 4));
    }
    if (p[1] == "explanations" && p.size() == 4) return explanation(p[2], p[3], query);
    if (p[1] == "matrix" && p.size() == 3) return matrix(p[2], query);
    if (p[1] == "features" && p.size() == 3) return features(p[2]);
    return not_found("no route for " + path);
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", path, e.what());
    return error(500, "internal_error", e.what());
  }
}

void mount(httplib::Server& server, const ApiService& api, const ServeOptions& options) {
  const std::string origin = options.cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type, If-None-Match"},
                              {"Access-Control-Expose-Headers", "ETag"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get(R"(/api/.*)", [&api](const httplib::Request& req, httplib::Response& res) {
    const std::string& tag = api.etag();
    res.set_header("ETag", tag);
    res.set_header("Cache-Control", "no-cache");
    if (req.get_header_value("If-None-Match") == tag) {
      res.status = 304;
      return;
    }
    Query query(req.params.begin(), req.params.end());
    const Response r = api.handle(req.path, query);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  auto refuse = [](const httplib::Request&, httplib::Response& res) {
    res.status = 405;
    res.set_content(R"({"error":"method_not_allowed","status":405,"message":"the API is read-only"})",
                    "application/json");
  };
  server.Post(R"(/api/.*)", refuse);
  server.Put(R"(/api/.*)", refuse);
  server.Delete(R"(/api/.*)", refuse);
  server.Patch(R"(/api/.*)", refuse);
  if (!options.static_dir.empty()) {
    if (!server.set_mount_point("/", options.static_dir.string()))
      throw ConfigError("static directory " + options.static_dir.string() + " does not exist");
  }
}

void serve(const ApiService& api, const ServeOptions& options) {
  httplib::Server server;
  mount(server, api, options);
  spdlog::info("serving on http://{}:{}", options.host, options.port);
  if (!server.listen(options.host, options.port))
    throw ConfigError(fmt::format("cannot listen on {}:{}", options.host, options.port));
}

}  // namespace tracseg::service
