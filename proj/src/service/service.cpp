#include "gpd/service/service.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gpd/errors.hpp"
#include "gpd/pipeline/hash.hpp"
#include "httplib.h"

namespace gpd::service {

namespace {

// A client mistake with a machine-readable code.
struct ClientError {
    int status;
    std::string code;
    std::string message;
};

[[noreturn]] void bad(const std::string& code, const std::string& message, int status = 400) {
    throw ClientError{status, code, message};
}

nlohmann::json parse_body(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) bad("bad_json", "request body is not valid JSON");
    if (!j.is_object()) bad("bad_json", "request body must be a JSON object");
    return j;
}

double number_field(const nlohmann::json& j, const char* name) {
    if (!j.contains(name)) bad("missing_field", std::string("'") + name + "' is required");
    if (!j[name].is_number()) bad("bad_field", std::string("'") + name + "' must be a number");
    const double v = j[name].get<double>();
    if (!std::isfinite(v)) bad("bad_field", std::string("'") + name + "' must be finite");
    return v;
}

std::vector<double> alpha_field(const nlohmann::json& j, std::size_t k) {
    const auto& a = j["alpha"];
    if (!a.is_array() || a.size() != k) bad("bad_alpha", "'alpha' must be an array of " + std::to_string(k) + " numbers");
    std::vector<double> out;
    for (const auto& v : a) {
        if (!v.is_number() || !std::isfinite(v.get<double>())) bad("bad_alpha", "'alpha' entries must be finite numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

microgen::RVEImage image_field(const nlohmann::json& j, std::size_t resolution) {
    if (!j["image"].is_string()) bad("bad_image", "'image' must be a base64 string");
    return decode_mask(j["image"].get<std::string>(), resolution);
}

std::string f32_base64(const std::vector<float>& v) {
    return pipeline::base64_encode(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(float)));
}

// Block mean over factor x factor tiles.
std::vector<float> downsample(const std::vector<double>& field, std::size_t r, std::size_t factor) {
    const std::size_t out_r = r / factor;
    std::vector<float> out(out_r * out_r);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t i = 0; i < out_r; ++i)
        for (std::size_t j = 0; j < out_r; ++j) {
            double s = 0.0;
            for (std::size_t a = 0; a < factor; ++a)
                for (std::size_t b = 0; b < factor; ++b) s += field[(i * factor + a) * r + j * factor + b];
            out[i * out_r + j] = static_cast<float>(s * inv);
        }
    return out;
}

std::string new_error_id() {
    static std::atomic<std::uint64_t> counter{0};
    std::ostringstream s;
    s << std::hex << std::setw(8) << std::setfill('0')
      << (std::chrono::steady_clock::now().time_since_epoch().count() & 0xffffffff) << "-" << counter++;
    return s.str();
}

}  // namespace

std::string encode_mask(const microgen::RVEImage& img) { return pipeline::base64_encode(img.pixels); }

microgen::RVEImage decode_mask(const std::string& text, std::size_t resolution) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = pipeline::base64_decode(text);
    } catch (const FormatError&) {
        bad("bad_image", "'image' is not valid base64");
    }
    if (bytes.size() != resolution * resolution) {
        bad("bad_image", "'image' must hold " + std::to_string(resolution * resolution) + " bytes (" +
                             std::to_string(resolution) + "x" + std::to_string(resolution) + ")");
    }
    microgen::RVEImage img;
    img.resolution = resolution;
    img.pixels.resize(bytes.size());
    std::transform(bytes.begin(), bytes.end(), img.pixels.begin(), [](std::uint8_t b) { return b ? 1 : 0; });
    return img;
}

Service::Service(pipeline::ModelBundle bundle, ServiceOptions options)
    : bundle_(std::move(bundle)), options_(std::move(options)) {
    bundle_.validate();
    hash_ = pipeline::bundle_hash(bundle_);
    bounds_ = pipeline::latent_bounds(bundle_);
}

Reply Service::guarded(const std::function<Reply()>& f) const {
    try {
        return f();
    } catch (const ClientError& e) {
        return {e.status, {{"error", e.code}, {"message", e.message}}};
    } catch (const std::exception& e) {
        const std::string id = new_error_id();
        if (options_.log_error) options_.log_error(id + " " + e.what());
        return {500, {{"error", "internal"}, {"id", id}}};
    }
}

Reply Service::health() const {
    return {200, {{"status", "ok"}, {"bundle_hash", hash_}, {"version", pipeline::kVersion}}};
}

Reply Service::encode(const std::string& body) const {
    return guarded([&] {
        const auto j = parse_body(body);
        if (!j.contains("image")) bad("missing_field", "'image' is required");
        const auto img = image_field(j, bundle_.resolution);
        return Reply{200, {{"alpha", pipeline::encode_image(bundle_, img)}}};
    });
}

Reply Service::generate(const std::string& body) const {
    return guarded([&] {
        const auto j = parse_body(body);
        if (!j.contains("n")) bad("missing_field", "'n' is required");
        if (!j["n"].is_number_integer()) bad("bad_n", "'n' must be an integer");
        const auto n = j["n"].get<std::int64_t>();
        if (n < 1 || static_cast<std::size_t>(n) > options_.max_generate) {
            bad("bad_n", "'n' must be between 1 and " + std::to_string(options_.max_generate));
        }
        std::uint64_t seed = 0;
        if (j.contains("seed")) {
            if (!j["seed"].is_number_unsigned()) bad("bad_seed", "'seed' must be a non-negative integer");
            seed = j["seed"].get<std::uint64_t>();
        }
        // Decoding geometry alone: the solutions are not part of the reply.
        const auto alphas = genlab::sample_latents(bundle_.gmm, static_cast<std::size_t>(n), seed);
        nlohmann::json a = nlohmann::json::array(), images = nlohmann::json::array();
        for (std::size_t i = 0; i < alphas.rows(); ++i) {
            const auto row = alphas.row(i);
            a.push_back(std::vector<double>(row.begin(), row.end()));
            images.push_back(encode_mask(pipeline::decode_image(bundle_, row).binary));
        }
        return Reply{200, {{"alphas", a}, {"images", images}, {"resolution", bundle_.resolution}}};
    });
}

Reply Service::explore(const std::string& body) const {
    return guarded([&] {
        const auto j = parse_body(body);
        const bool has_alpha = j.contains("alpha"), has_image = j.contains("image");
        if (has_alpha == has_image) bad("alpha_xor_image", "give exactly one of 'alpha' or 'image'");
        const oracle::MaterialPoint mu{number_field(j, "mu1"), number_field(j, "mu2")};
        if (!bundle_.ranges.contains(mu)) {
            std::ostringstream msg;
            msg << "mu1 must lie in [" << bundle_.ranges.mu1_min << ", " << bundle_.ranges.mu1_max << "] and mu2 in ["
                << bundle_.ranges.mu2_min << ", " << bundle_.ranges.mu2_max << "] MPa";
            bad("mu_out_of_range", msg.str(), 422);
        }
        const std::size_t r = bundle_.resolution;
        std::size_t factor = 1;
        if (j.contains("field_resolution")) {
            if (!j["field_resolution"].is_number_unsigned()) bad("bad_field_resolution", "'field_resolution' must be a positive integer");
            factor = j["field_resolution"].get<std::size_t>();
            if (factor == 0 || r % factor != 0) {
                bad("bad_field_resolution", "'field_resolution' must divide the resolution " + std::to_string(r));
            }
        }

        std::vector<double> alpha;
        microgen::RVEImage image;
        if (has_alpha) {
            alpha = alpha_field(j, bundle_.geometry.k());
            image = pipeline::decode_image(bundle_, alpha).binary;
        } else {
            image = image_field(j, r);
            alpha = pipeline::encode_image(bundle_, image);
        }
        const auto sol = pipeline::solution_for_alpha(bundle_, alpha);
        const auto field = spgd::evaluate(sol, mu);
        if (!std::all_of(field.begin(), field.end(), [](double v) { return std::isfinite(v); })) {
            throw NumericalError("explore: non-finite field");
        }
        const auto out = downsample(field, r, factor);
        const auto [lo, hi] = std::minmax_element(out.begin(), out.end());

        nlohmann::json modes = nlohmann::json::array();
        for (const auto& m : sol.modes) {
            const auto [flo, fhi] = std::minmax_element(m.f.begin(), m.f.end());
            modes.push_back({{"f_min", *flo},
                             {"f_max", *fhi},
                             {"m1", spgd::mode_value(sol.basis1, m.lambda1, mu.mu1)},
                             {"m2", spgd::mode_value(sol.basis2, m.lambda2, mu.mu2)}});
        }
        return Reply{200,
                     {{"alpha", alpha},
                      {"image", encode_mask(image)},
                      {"resolution", r},
                      {"field", f32_base64(out)},
                      {"field_size", r / factor},
                      {"field_min", *lo},
                      {"field_max", *hi},
                      {"modes_summary", modes}}};
    });
}

Reply Service::latent_bounds() const { return {200, {{"p1", bounds_.p1}, {"p99", bounds_.p99}}}; }

void Service::attach(httplib::Server& server) const {
    const auto send = [](httplib::Response& res, const Reply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Vary", "Origin"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/latent-bounds",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, latent_bounds()); });
    server.Post("/encode",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, encode(req.body)); });
    server.Post("/generate",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, generate(req.body)); });
    server.Post("/explore",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, explore(req.body)); });
    server.set_exception_handler([this, send](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        const std::string id = new_error_id();
        if (options_.log_error) options_.log_error(id + " unhandled exception");
        send(res, {500, {{"error", "internal"}, {"id", id}}});
    });
}

void serve(const Service& service, const std::string& host, int port) {
    httplib::Server server;
    service.attach(server);
    if (!server.listen(host, port)) throw UsageError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace gpd::service
