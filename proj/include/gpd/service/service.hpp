#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "gpd/pipeline/bundle.hpp"
#include "gpd/pipeline/workflows.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace gpd::service {

struct ServiceOptions {
    std::string cors_origin = "http://localhost:5173";
    std::size_t max_generate = 256;
    /// Receives "<error id> <details>" for every 500.
    std::function<void(const std::string&)> log_error;
};

struct Reply {
    int status = 200;
    nlohmann::json body;
};

/// Request handlers over one immutable bundle. Safe to call concurrently.
/// Client errors reply 400 with {"error": code, "message"}; material
/// parameters outside the ranges reply 422; anything else is a 500 that
/// carries only an error id.
class Service {
public:
    explicit Service(pipeline::ModelBundle bundle, ServiceOptions options = {});

    const pipeline::ModelBundle& bundle() const { return bundle_; }
    const std::string& bundle_hash() const { return hash_; }

    Reply health() const;
    Reply encode(const std::string& body) const;
    Reply generate(const std::string& body) const;
    Reply explore(const std::string& body) const;
    Reply latent_bounds() const;

    /// Routes, CORS headers and the OPTIONS preflight.
    void attach(httplib::Server& server) const;

private:
    Reply guarded(const std::function<Reply()>& f) const;

    pipeline::ModelBundle bundle_;
    ServiceOptions options_;
    std::string hash_;
    pipeline::LatentBounds bounds_;
};

/// Masks travel as base64 of R*R bytes, row-major, nonzero = inclusion.
std::string encode_mask(const microgen::RVEImage& img);
microgen::RVEImage decode_mask(const std::string& text, std::size_t resolution);

/// Binds and blocks until the server stops.
void serve(const Service& service, const std::string& host, int port);

}  // namespace gpd::service
