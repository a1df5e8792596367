#pragma once

// Minimal PGM (P2/P5) reader and writer for the preprocess subcommand.

#include <cctype>
#include <filesystem>
#include <string>

#include "cure/clahe.hpp"
#include "cure/io.hpp"

namespace cure::pgm {

inline IntensityGrid read(const std::filesystem::path& path) {
    const std::string data = read_text_file(path);
    std::size_t pos = 0;
    auto skip = [&] {
        for (;;) {
            while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
            if (pos < data.size() && data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
                continue;
            }
            return;
        }
    };
    auto number = [&]() -> long {
        skip();
        const std::size_t start = pos;
        while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
        if (start == pos) throw Error("'" + path.string() + "': malformed PGM header");
        return std::stol(data.substr(start, pos - start));
    };

    if (data.size() < 2 || data[0] != 'P' || (data[1] != '2' && data[1] != '5')) throw Error("'" + path.string() + "' is not a P2/P5 PGM file");
    const bool binary = data[1] == '5';
    pos = 2;
    IntensityGrid img;
    img.width = static_cast<int>(number());
    img.height = static_cast<int>(number());
    img.max_level = static_cast<int>(number());
    if (img.width <= 0 || img.height <= 0 || img.max_level <= 0 || img.max_level > 65535) throw Error("'" + path.string() + "': bad PGM dimensions");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    img.values.resize(n);
    if (binary) {
        ++pos;  // single whitespace after maxval
        const std::size_t bpp = img.max_level > 255 ? 2 : 1;
        if (data.size() < pos + n * bpp) throw Error("'" + path.string() + "': truncated PGM data");
        for (std::size_t i = 0; i < n; ++i) {
            const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bpp);
            img.values[i] = static_cast<std::uint16_t>(bpp == 2 ? (p[0] << 8) | p[1] : p[0]);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) img.values[i] = static_cast<std::uint16_t>(number());
    }
    for (auto v : img.values)
        if (v > img.max_level) throw Error("'" + path.string() + "': pixel exceeds maxval");
    return img;
}

/// Binary P5 encoding.
inline std::string encode(const IntensityGrid& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" + std::to_string(img.max_level) + "\n";
    const bool wide = img.max_level > 255;
    for (auto v : img.values) {
        if (wide) out += static_cast<char>(v >> 8);
        out += static_cast<char>(v & 0xff);
    }
    return out;
}

}  // namespace cure::pgm
