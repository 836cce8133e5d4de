#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

#include "doctest.h"
#include "gpd/errors.hpp"
#include "gpd/pipeline/hash.hpp"
#include "gpd/pipeline/stages.hpp"
#include "gpd/rng.hpp"
#include "gpd/service/service.hpp"
#include "httplib.h"
#include "../support/tiny_config.hpp"

using namespace gpd;
using namespace gpd::service;
using nlohmann::json;

namespace {

struct Trained {
    std::filesystem::path dir;
    pipeline::DataArtifact data;
    std::unique_ptr<Service> service;
};

const Trained& trained() {
    static const Trained t = [] {
        Trained t;
        t.dir = gpd::testing::scratch_dir("service");
        pipeline::Pipeline p(gpd::testing::tiny_config(), t.dir);
        p.run_all();
        t.data = pipeline::read_data(p.artifact(pipeline::Stage::data));
        t.service = std::make_unique<Service>(p.load_bundle());
        return t;
    }();
    return t;
}

std::vector<float> floats(const std::string& b64) {
    const auto bytes = pipeline::base64_decode(b64);
    std::vector<float> out(bytes.size() / sizeof(float));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

double mean(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("health reports the bundle hash") {
    const auto& s = *trained().service;
    const auto r = s.health();
    CHECK(r.status == 200);
    CHECK(r.body["status"] == "ok");
    CHECK(r.body["bundle_hash"] == pipeline::sha256_hex(microgen::read_file_bytes(trained().dir / "bundle.gpdc")));
}

TEST_CASE("explore matches the reconstruction workflow exactly") {
    const auto& t = trained();
    const auto& b = t.service->bundle();
    const auto img = t.data.images[3];
    const auto grid = oracle::collocation_grid(b.ranges);
    const auto mu = grid.points[grid.train_indices[5]];

    const auto enc = t.service->encode(json{{"image", encode_mask(img)}}.dump());
    REQUIRE(enc.status == 200);
    const json req{{"alpha", enc.body["alpha"]}, {"mu1", mu.mu1}, {"mu2", mu.mu2}};
    const auto r = t.service->explore(req.dump());
    REQUIRE(r.status == 200);

    const auto expected = spgd::evaluate(pipeline::reconstruct_for_geometry(b, img), mu);
    const auto got = floats(r.body["field"]);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == static_cast<float>(expected[i]));
    CHECK(r.body["field_min"].get<double>() == *std::min_element(got.begin(), got.end()));
    CHECK(r.body["field_max"].get<double>() == *std::max_element(got.begin(), got.end()));
    CHECK(r.body["modes_summary"].size() == 3);

    // Same answer through the image path, byte for byte on repeat.
    const json by_image{{"image", encode_mask(img)}, {"mu1", mu.mu1}, {"mu2", mu.mu2}};
    const auto r2 = t.service->explore(by_image.dump());
    REQUIRE(r2.status == 200);
    CHECK(r2.body["field"] == r.body["field"]);
    CHECK(r2.body["image"] == encode_mask(img));
    CHECK(t.service->explore(req.dump()).body.dump() == r.body.dump());
}

TEST_CASE("explore validates its request") {
    const auto& s = *trained().service;
    const auto alpha = trained().service->encode(json{{"image", encode_mask(trained().data.images[0])}}.dump()).body["alpha"];
    const auto status = [&](const json& j) { return s.explore(j.dump()).status; };
    const auto code = [&](const json& j) { return s.explore(j.dump()).body["error"].get<std::string>(); };

    CHECK(status({{"alpha", alpha}, {"mu1", 100.0}, {"mu2", 20000.0}}) == 422);
    CHECK(code({{"alpha", alpha}, {"mu1", 100.0}, {"mu2", 20000.0}}) == "mu_out_of_range");
    CHECK(status({{"alpha", alpha}, {"mu1", 1000.0}, {"mu2", 90000.0}}) == 422);
    CHECK(code({{"mu1", 1000.0}, {"mu2", 20000.0}}) == "alpha_xor_image");
    CHECK(code({{"alpha", alpha}, {"image", "AAAA"}, {"mu1", 1000.0}, {"mu2", 20000.0}}) == "alpha_xor_image");
    CHECK(code({{"alpha", {1.0, 2.0}}, {"mu1", 1000.0}, {"mu2", 20000.0}}) == "bad_alpha");
    CHECK(code({{"image", "AAAA"}, {"mu1", 1000.0}, {"mu2", 20000.0}}) == "bad_image");
    CHECK(code({{"alpha", alpha}, {"mu2", 20000.0}}) == "missing_field");
    CHECK(code({{"alpha", alpha}, {"mu1", "x"}, {"mu2", 20000.0}}) == "bad_field");
    CHECK(code({{"alpha", alpha}, {"mu1", 1000.0}, {"mu2", 20000.0}, {"field_resolution", 3}}) == "bad_field_resolution");
    CHECK(s.explore("{not json").status == 400);
    CHECK(s.explore("[1, 2]").status == 400);
}

TEST_CASE("explore downsamples by block means") {
    const auto& s = *trained().service;
    const auto alpha = s.encode(json{{"image", encode_mask(trained().data.images[1])}}.dump()).body["alpha"];
    const json full{{"alpha", alpha}, {"mu1", 1200.0}, {"mu2", 30000.0}};
    json half = full;
    half["field_resolution"] = 2;
    const auto a = floats(s.explore(full.dump()).body["field"]);
    const auto r = s.explore(half.dump());
    REQUIRE(r.status == 200);
    const auto h = floats(r.body["field"]);
    const std::size_t n = s.bundle().resolution, m = n / 2;
    REQUIRE(h.size() == m * m);
    CHECK(r.body["field_size"] == m);
    const double block = (a[0] + a[1] + a[n] + a[n + 1]) / 4.0;
    CHECK(h[0] == doctest::Approx(block).epsilon(1e-6));
}

TEST_CASE("generate samples reproducible two-phase designs") {
    const auto& s = *trained().service;
    CHECK(s.generate(json{{"n", 0}}.dump()).status == 400);
    CHECK(s.generate(json{{"n", -2}}.dump()).status == 400);
    CHECK(s.generate(json{{"n", 100000}}.dump()).status == 400);
    CHECK(s.generate(json{{"n", 2}, {"seed", -1}}.dump()).body["error"] == "bad_seed");
    const auto r = s.generate(json{{"n", 3}, {"seed", 11}}.dump());
    REQUIRE(r.status == 200);
    REQUIRE(r.body["alphas"].size() == 3);
    REQUIRE(r.body["images"].size() == 3);
    const auto designs = pipeline::generate_designs(s.bundle(), 3, 11);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r.body["alphas"][i].get<std::vector<double>>() == designs[i].alpha);
        CHECK(decode_mask(r.body["images"][i], s.bundle().resolution).pixels == designs[i].image.pixels);
    }
    CHECK(s.generate(json{{"n", 3}, {"seed", 11}}.dump()).body.dump() == r.body.dump());
}

TEST_CASE("latent bounds bracket the training latents") {
    const auto& s = *trained().service;
    const auto r = s.latent_bounds();
    REQUIRE(r.status == 200);
    const auto p1 = r.body["p1"].get<std::vector<double>>(), p99 = r.body["p99"].get<std::vector<double>>();
    REQUIRE(p1.size() == s.bundle().geometry.k());
    for (std::size_t j = 0; j < p1.size(); ++j) CHECK(p1[j] < p99[j]);
}

TEST_CASE("stiffer inclusions do not lower the mean field") {
    const auto& s = *trained().service;
    const auto r = s.latent_bounds().body;
    const auto p1 = r["p1"].get<std::vector<double>>(), p99 = r["p99"].get<std::vector<double>>();
    Rng rng(2024);
    int violations = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> alpha(p1.size());
        for (std::size_t j = 0; j < alpha.size(); ++j) alpha[j] = rng.uniform(p1[j], p99[j]);
        const auto at = [&](double mu2) {
            return mean(floats(s.explore(json{{"alpha", alpha}, {"mu1", 1600.0}, {"mu2", mu2}}.dump()).body["field"]));
        };
        if (at(60000.0) < at(20000.0)) ++violations;
    }
    CHECK(violations <= 2);
}

TEST_CASE("internal failures expose only an error id") {
    std::string logged;
    ServiceOptions opts;
    opts.log_error = [&](const std::string& line) { logged = line; };
    // Non-finite weights pass the structural checks but poison every field.
    auto b = trained().service->bundle();
    std::fill(b.regressors.map_x.params.begin(), b.regressors.map_x.params.end(), NAN);
    Service s(std::move(b), opts);
    std::vector<double> alpha(s.bundle().geometry.k(), 0.0);
    const auto r = s.explore(json{{"alpha", alpha}, {"mu1", 1600.0}, {"mu2", 30000.0}}.dump());
    REQUIRE(r.status == 500);
    CHECK(r.body.size() == 2);
    CHECK(r.body["error"] == "internal");
    CHECK(logged.rfind(r.body["id"].get<std::string>() + " ", 0) == 0);
    CHECK(r.body.dump().find("finite") == std::string::npos);
}

TEST_CASE("http server routes, CORS and concurrent requests") {
    const auto& s = *trained().service;
    httplib::Server server;
    s.attach(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    CHECK(json::parse(health->body)["bundle_hash"] == s.bundle_hash());

    auto pre = cli.Options("/explore");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

    auto bad = cli.Post("/explore", json{{"alpha", {0, 0, 0, 0}}, {"mu1", 100.0}, {"mu2", 20000.0}}.dump(),
                        "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    auto zero = cli.Post("/generate", R"({"n": 0})", "application/json");
    REQUIRE(zero);
    CHECK(zero->status == 400);
    auto bounds = cli.Get("/latent-bounds");
    REQUIRE(bounds);
    CHECK(bounds->status == 200);

    const auto alpha = s.encode(json{{"image", encode_mask(trained().data.images[2])}}.dump()).body["alpha"];
    const std::string body = json{{"alpha", alpha}, {"mu1", 2000.0}, {"mu2", 50000.0}}.dump();
    const std::string expected = s.explore(body).body.dump();
    std::vector<std::string> got(4);
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < got.size(); ++i) {
        workers.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            if (auto r = c.Post("/explore", body, "application/json")) got[i] = r->body;
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& g : got) CHECK(g == expected);

    server.stop();
    th.join();
}
