#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracseg/artifacts/bundle.hpp"
#include "tracseg/data/dataset.hpp"
#include "tracseg/influence/explanation.hpp"

namespace httplib {
class Server;
}

namespace tracseg::service {

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::multimap<std::string, std::string>;

/// Read-only API over one sealed bundle. `handle` is the whole routing
/// logic; the HTTP server only adapts requests to it.
class ApiService {
 public:
  explicit ApiService(artifacts::Bundle bundle);

  Response handle(const std::string& path, const Query& query) const;
  const std::string& etag() const noexcept { return bundle_.etag(); }

 private:
  Response meta() const;
  Response images(const Query& query) const;
  Response image(const std::string& id) const;
  Response image_png(const std::string& id, const std::string& kind) const;
  Response explanation(const std::string& id, const std::string& cls, const Query& query) const;
  Response matrix(const std::string& cls, const Query& query) const;
  Response features(const std::string& cls) const;

  const data::Sample* find_image(const std::string& id, data::Split* split = nullptr) const;
  int parse_class(const std::string& text) const;  // 0 when not a foreground class
  nlohmann::json describe(const data::Sample& s, data::Split split) const;

  artifacts::Bundle bundle_;
  data::DatasetSplits splits_;
  std::map<std::pair<std::string, int>, influence::ExplanationVector> explanations_;
  influence::GlobalExplainerSet globals_;
  nlohmann::json eval_;

  mutable std::mutex cache_mutex_;
  mutable std::map<std::pair<std::string, std::string>, std::string> png_cache_;
};

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path static_dir;  // explorer build output; not served when empty
  std::string cors_origin = "*";
};

/// Registers API routes, CORS, ETag handling and the static mount on `server`.
void mount(httplib::Server& server, const ApiService& api, const ServeOptions& options);

/// Blocks serving until the process is stopped.
void serve(const ApiService& api, const ServeOptions& options);

}  // namespace tracseg::service
