#include "gpd/microgen/pgm.hpp"

#include <fstream>
#include <sstream>

#include "gpd/errors.hpp"

namespace gpd::microgen {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string token(std::istream& in) {
    std::string t;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!t.empty()) break;
            continue;
        }
        t.push_back(c);
    }
    return t;
}

std::size_t number(std::istream& in, const std::string& what, const std::filesystem::path& path) {
    const std::string t = token(in);
    try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad PGM " + what + " '" + t + "'");
    }
}

}  // namespace

RVEImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::string magic = token(in);
    if (magic != "P5" && magic != "P2") throw FormatError(path.string() + ": not a PGM (P5/P2) file");
    const std::size_t w = number(in, "width", path), h = number(in, "height", path);
    const std::size_t maxval = number(in, "maxval", path);
    if (w == 0 || w != h) throw FormatError(path.string() + ": image must be square");
    if (maxval == 0 || maxval > 255) throw FormatError(path.string() + ": maxval must be in 1..255");

    RVEImage img;
    img.resolution = w;
    img.pixels.resize(w * h);
    if (magic == "P5") {
        std::vector<char> raw(w * h);
        if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
            throw FormatError(path.string() + ": truncated pixel data");
        }
        for (std::size_t i = 0; i < raw.size(); ++i)
            img.pixels[i] = 2 * static_cast<std::size_t>(static_cast<unsigned char>(raw[i])) >= maxval ? 1 : 0;
    } else {
        for (auto& p : img.pixels) p = 2 * number(in, "pixel", path) >= maxval ? 1 : 0;
    }
    return img;
}

void write_pgm(const RVEImage& img, const std::filesystem::path& path) {
    if (img.pixels.size() != img.resolution * img.resolution) throw ArgumentError("write_pgm: pixel count is not R^2");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << "P5\n" << img.resolution << " " << img.resolution << "\n255\n";
    for (auto p : img.pixels) out.put(static_cast<char>(p ? 255 : 0));
    if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace gpd::microgen
