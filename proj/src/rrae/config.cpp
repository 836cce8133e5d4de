#include "gpd/rrae/config.hpp"

#include "gpd/errors.hpp"

namespace gpd::rrae {

using namespace numkit;

const char* to_string(Preset p) {
    switch (p) {
        case Preset::geometry: return "geometry";
        case Preset::spatial: return "spatial";
        case Preset::m1: return "m1";
        case Preset::m2: return "m2";
    }
    return "geometry";
}

Preset preset_from_string(const std::string& s) {
    if (s == "geometry") return Preset::geometry;
    if (s == "spatial") return Preset::spatial;
    if (s == "m1") return Preset::m1;
    if (s == "m2") return Preset::m2;
    throw ArgumentError("unknown RRAE preset '" + s + "' (expected geometry, spatial, m1 or m2)");
}

void RRAEConfig::validate(std::size_t dataset_size) const {
    if (k_max < 1 || latent_dim < k_max) throw ArgumentError(name + ": need latent_dim >= k_max >= 1");
    if (batch_size < 1) throw ArgumentError(name + ": batch_size must be positive");
    if (dataset_size > 0 && batch_size > dataset_size) {
        throw ArgumentError(name + ": batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                            std::to_string(dataset_size));
    }
    schedule.validate();
    const Network<float> enc(encoder);
    const Network<float> dec(decoder);
    if (enc.output_shape().size() != latent_dim) throw ArgumentError(name + ": encoder output is not latent_dim wide");
    if (dec.input_shape().size() != latent_dim) throw ArgumentError(name + ": decoder input is not latent_dim wide");
    if (!(dec.output_shape() == enc.input_shape())) throw ArgumentError(name + ": decoder output shape != input shape");
}

namespace {

void check_resolution(std::size_t r) {
    if (r < 16 || r % 4 != 0) throw ArgumentError("resolution must be a multiple of 4 and at least 16");
}

// conv stack, flatten, [64, 64] softplus, linear to L
NetworkSpec conv_encoder(std::size_t channels, std::size_t r, std::size_t latent, std::size_t kernel) {
    NetworkSpec s;
    s.input = {channels, r, r};
    std::size_t c = channels, h = r;
    for (std::size_t out : {32u, 64u, 128u, 256u}) {
        s.layers.push_back(Conv2d{c, out, kernel, 2, 1, Activation::relu});
        c = out;
        h = conv_output_size(h, kernel, 2, 1);
    }
    s.layers.push_back(Reshape{{c * h * h, 1, 1}});
    s.layers.push_back(Dense{c * h * h, 64, Activation::softplus});
    s.layers.push_back(Dense{64, 64, Activation::softplus});
    s.layers.push_back(Dense{64, latent, Activation::linear});
    return s;
}

// [64, 64] softplus, linear to C0 x r/4 x r/4, two transposed convs, 1x1 conv
NetworkSpec conv_decoder(std::size_t latent, std::size_t r, std::size_t kernel, std::size_t mid, std::size_t last,
                         std::size_t out_channels) {
    const std::size_t q = r / 4;
    const std::size_t pad_out = kernel % 2 == 1 ? 1 : 0;
    NetworkSpec s;
    s.input = {latent, 1, 1};
    s.layers.push_back(Dense{latent, 64, Activation::softplus});
    s.layers.push_back(Dense{64, 64, Activation::softplus});
    s.layers.push_back(Dense{64, kDecoderSeedChannels * q * q, Activation::linear});
    s.layers.push_back(Reshape{{kDecoderSeedChannels, q, q}});
    s.layers.push_back(Conv2dTranspose{kDecoderSeedChannels, mid, kernel, 2, 1, pad_out, Activation::relu});
    // A one-channel ReLU here permanently cuts gradient to every pixel it
    // switches off, so that single map stays linear.
    const Activation last_act = last == 1 ? Activation::linear : Activation::relu;
    s.layers.push_back(Conv2dTranspose{mid, last, kernel, 2, 1, pad_out, last_act});
    s.layers.push_back(Conv2d{last, out_channels, 1, 1, 0, Activation::linear});
    return s;
}

}  // namespace

NetworkSpec geometry_encoder(std::size_t r, std::size_t latent) {
    check_resolution(r);
    return conv_encoder(1, r, latent, 4);
}

NetworkSpec geometry_decoder(std::size_t r, std::size_t latent) {
    check_resolution(r);
    return conv_decoder(latent, r, 4, 8, 1, 1);
}

NetworkSpec spatial_encoder(std::size_t r, std::size_t latent) {
    check_resolution(r);
    return conv_encoder(3, r, latent, 3);
}

NetworkSpec spatial_decoder(std::size_t r, std::size_t latent) {
    check_resolution(r);
    return conv_decoder(latent, r, 3, 64, 32, 3);
}

NetworkSpec curve_encoder(std::size_t input, std::size_t latent) {
    NetworkSpec s;
    s.input = {input, 1, 1};
    s.layers.push_back(Dense{input, 64, Activation::relu});
    s.layers.push_back(Dense{64, latent, Activation::linear});
    return s;
}

NetworkSpec curve_decoder(std::size_t input, std::size_t latent) {
    NetworkSpec s;
    s.input = {latent, 1, 1};
    std::size_t prev = latent;
    for (int i = 0; i < 6; ++i) {
        s.layers.push_back(Dense{prev, 64, Activation::relu});
        prev = 64;
    }
    s.layers.push_back(Dense{64, input, Activation::linear});
    return s;
}

RRAEConfig preset(Preset p, std::size_t resolution, std::uint64_t seed, std::uint64_t divisor) {
    RRAEConfig c;
    c.name = to_string(p);
    c.seed = seed;
    c.batch_size = 20;
    c.optimizer.kind = OptimizerKind::adabelief;
    const LrSchedule three_by_3000{{{3000, 1e-3}, {3000, 1e-4}, {3000, 1e-5}}};
    switch (p) {
        case Preset::geometry:
            c.latent_dim = 300;
            c.k_max = 4;
            c.encoder = geometry_encoder(resolution, c.latent_dim);
            c.decoder = geometry_decoder(resolution, c.latent_dim);
            c.schedule = three_by_3000;
            c.clamp_output = true;
            break;
        case Preset::spatial:
            c.latent_dim = 3000;
            c.k_max = 12;
            c.encoder = spatial_encoder(resolution, c.latent_dim);
            c.decoder = spatial_decoder(resolution, c.latent_dim);
            c.schedule = LrSchedule{{{6000, 1e-3}, {5000, 1e-4}, {4000, 1e-5}}};
            break;
        case Preset::m1:
        case Preset::m2:
            c.latent_dim = p == Preset::m1 ? 1700 : 800;
            c.k_max = 3;
            c.encoder = curve_encoder(kCurveInput, c.latent_dim);
            c.decoder = curve_decoder(kCurveInput, c.latent_dim);
            c.schedule = three_by_3000;
            break;
    }
    if (divisor > 1) c.schedule = c.schedule.shortened(divisor);
    return c;
}

nlohmann::json to_json(const RRAEConfig& c) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& [steps, rate] : c.schedule.phases) phases.push_back({steps, rate});
    return {{"name", c.name},
            {"encoder", numkit::to_json(c.encoder)},
            {"decoder", numkit::to_json(c.decoder)},
            {"latent_dim", c.latent_dim},
            {"k_max", c.k_max},
            {"batch_size", c.batch_size},
            {"schedule", phases},
            {"optimizer",
             {{"kind", numkit::to_string(c.optimizer.kind)},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"eps", c.optimizer.eps}}},
            {"seed", c.seed},
            {"clamp_output", c.clamp_output}};
}

RRAEConfig config_from_json(const nlohmann::json& j) {
    try {
        RRAEConfig c;
        c.name = j.at("name").get<std::string>();
        c.encoder = network_spec_from_json(j.at("encoder"));
        c.decoder = network_spec_from_json(j.at("decoder"));
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.k_max = j.at("k_max").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        for (const auto& ph : j.at("schedule")) c.schedule.phases.emplace_back(ph.at(0).get<std::uint64_t>(), ph.at(1).get<double>());
        const auto& o = j.at("optimizer");
        c.optimizer.kind = optimizer_from_string(o.at("kind").get<std::string>());
        c.optimizer.beta1 = o.at("beta1").get<double>();
        c.optimizer.beta2 = o.at("beta2").get<double>();
        c.optimizer.eps = o.at("eps").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.clamp_output = j.at("clamp_output").get<bool>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed RRAE config: ") + e.what());
    }
}

}  // namespace gpd::rrae
