#include "gpd/pipeline/bundle.hpp"

#include "gpd/errors.hpp"
#include "gpd/pipeline/hash.hpp"

namespace gpd::pipeline {

namespace {

nlohmann::json ranges_json(const oracle::MaterialRanges& r) { return {r.mu1_min, r.mu1_max, r.mu2_min, r.mu2_max}; }

nlohmann::json oracle_json(const oracle::OracleConfig& o) {
    return {{"applied_strain", o.applied_strain}, {"boundary_length", o.boundary_length},
            {"amplitude", o.amplitude},           {"nonseparable_weight", o.nonseparable_weight},
            {"poisson_matrix", o.poisson_matrix}, {"poisson_inclusion", o.poisson_inclusion}};
}

void require(bool ok, const std::string& component, const std::string& what) {
    if (!ok) throw ConsistencyError("bundle component '" + component + "': " + what);
}

std::size_t out_width(const latentmap::Regressor& r) {
    return std::get<numkit::Dense>(r.spec.layers.back()).out;
}

}  // namespace

void ModelBundle::validate() const {
    const numkit::Shape image{1, resolution, resolution};
    const numkit::Shape fields{spgd::kModes, resolution, resolution};
    require(geometry.config.input_shape() == image, "geometry", "input shape does not match the bundle resolution");
    require(spatial.config.input_shape() == fields, "spatial", "input must be 3 x resolution^2");
    require(m1.config.input_shape().size() == rrae::kCurveInput, "m1", "curve input must have 3000 values");
    require(m2.config.input_shape().size() == rrae::kCurveInput, "m2", "curve input must have 3000 values");

    const std::size_t ka = geometry.k();
    require(table.alpha.cols() == ka && table.alpha_norm.width() == ka, "table",
            "alpha width " + std::to_string(table.alpha.cols()) + " differs from geometry k_max " + std::to_string(ka));
    require(table.gamma_x.cols() == spatial.k() && table.gamma_x_norm.width() == spatial.k(), "table",
            "gamma_x width differs from spatial k_max");
    require(table.gamma_1.cols() == m1.k() && table.gamma_1_norm.width() == m1.k(), "table",
            "gamma_1 width differs from m1 k_max");
    require(table.gamma_2.cols() == m2.k() && table.gamma_2_norm.width() == m2.k(), "table",
            "gamma_2 width differs from m2 k_max");
    for (const auto* r : {&regressors.map_x, &regressors.map_1, &regressors.map_2}) {
        require(r->spec.input.size() == ka, "regressors", "input width differs from geometry k_max");
    }
    require(out_width(regressors.map_x) == spatial.k(), "regressors.map_x", "output width differs from spatial k_max");
    require(out_width(regressors.map_1) == m1.k(), "regressors.map_1", "output width differs from m1 k_max");
    require(out_width(regressors.map_2) == m2.k(), "regressors.map_2", "output width differs from m2 k_max");
    require(gmm.dim() == ka, "gmm", "dimension differs from geometry k_max");
    require(gmm.k() >= 1 && gmm.covariances.size() == gmm.k(), "gmm", "component arrays disagree");
    require(basis1.lo == ranges.mu1_min && basis1.hi == ranges.mu1_max, "basis1", "range differs from the material ranges");
    require(basis2.lo == ranges.mu2_min && basis2.hi == ranges.mu2_max, "basis2", "range differs from the material ranges");
}

microgen::DatasetContainer to_container(const ModelBundle& b) {
    microgen::DatasetContainer c;
    c.meta["bundle"] = {{"format", kBundleFormat},
                        {"version", kVersion},
                        {"config_hash", b.config_hash},
                        {"resolution", b.resolution},
                        {"ranges", ranges_json(b.ranges)},
                        {"oracle", oracle_json(b.oracle)},
                        {"normalization", spgd::to_json(b.normalization)},
                        {"basis1", spgd::to_json(b.basis1)},
                        {"basis2", spgd::to_json(b.basis2)}};
    rrae::put_model(c, "geometry", b.geometry);
    rrae::put_model(c, "spatial", b.spatial);
    rrae::put_model(c, "m1", b.m1);
    rrae::put_model(c, "m2", b.m2);
    latentmap::put_regressors(c, "regressors", b.regressors);
    latentmap::put_table(c, "table", b.table);
    genlab::put_gmm(c, "gmm", b.gmm);
    return c;
}

ModelBundle from_container(const microgen::DatasetContainer& c) {
    if (!c.meta.contains("bundle")) throw FormatError("container is not a model bundle");
    const auto& m = c.meta.at("bundle");
    ModelBundle b;
    try {
        const int format = m.at("format").get<int>();
        if (format != kBundleFormat) {
            throw FormatError("bundle format " + std::to_string(format) + " is not supported (expected " +
                              std::to_string(kBundleFormat) + ")");
        }
        b.config_hash = m.at("config_hash").get<std::string>();
        b.resolution = m.at("resolution").get<std::size_t>();
        const auto r = m.at("ranges").get<std::array<double, 4>>();
        b.ranges = {r[0], r[1], r[2], r[3]};
        const auto& o = m.at("oracle");
        b.oracle.applied_strain = o.at("applied_strain").get<double>();
        b.oracle.boundary_length = o.at("boundary_length").get<double>();
        b.oracle.amplitude = o.at("amplitude").get<double>();
        b.oracle.nonseparable_weight = o.at("nonseparable_weight").get<double>();
        b.oracle.poisson_matrix = o.at("poisson_matrix").get<double>();
        b.oracle.poisson_inclusion = o.at("poisson_inclusion").get<double>();
        b.normalization = spgd::normalization_from_json(m.at("normalization"));
        b.basis1 = spgd::basis_from_json(m.at("basis1"));
        b.basis2 = spgd::basis_from_json(m.at("basis2"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bundle manifest: ") + e.what());
    }
    b.geometry = rrae::get_model(c, "geometry");
    b.spatial = rrae::get_model(c, "spatial");
    b.m1 = rrae::get_model(c, "m1");
    b.m2 = rrae::get_model(c, "m2");
    b.regressors = latentmap::get_regressors(c, "regressors");
    b.table = latentmap::get_table(c, "table");
    b.gmm = genlab::get_gmm(c, "gmm");
    b.validate();
    return b;
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) {
    b.validate();
    microgen::write_dataset(to_container(b), path);
}

ModelBundle load_bundle(const std::filesystem::path& path) { return from_container(microgen::read_dataset(path)); }

std::string bundle_hash(const ModelBundle& b) { return sha256_hex(microgen::serialize(to_container(b))); }

}  // namespace gpd::pipeline
