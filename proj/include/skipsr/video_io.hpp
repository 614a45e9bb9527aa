#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include <json.hpp>

#include "skipsr/video.hpp"

namespace skipsr {

enum class VideoFormat { y4m, raw_rgb };

inline VideoFormat format_from_path(const std::string& path)
{
    auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == "y4m" ? VideoFormat::y4m : VideoFormat::raw_rgb;
}

namespace detail {

// BT.601 full-range conversion, fixed so decoded tensors are reproducible.
inline void ycbcr_to_rgb(double y, double cb, double cr, double& r, double& g, double& b)
{
    r = y + 1.402 * (cr - 128.0);
    g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    b = y + 1.772 * (cb - 128.0);
}

inline void rgb_to_ycbcr(double r, double g, double b, double& y, double& cb, double& cr)
{
    y = 0.299 * r + 0.587 * g + 0.114 * b;
    cb = (b - y) / 1.772 + 128.0;
    cr = (r - y) / 1.402 + 128.0;
}

inline std::uint8_t to_u8(double v)
{
    long r = std::lround(v);
    return static_cast<std::uint8_t>(std::clamp<long>(r, 0, 255));
}

} // namespace detail

inline VideoTensor load_y4m(const std::string& path)
{
    std::ifstream is = open_in(path);
    std::string header;
    if (!std::getline(is, header))
        throw FormatError("empty y4m file: " + path);
    if (header.rfind("YUV4MPEG2", 0) != 0)
        throw FormatError("missing YUV4MPEG2 magic: " + path);

    std::int64_t w = 0, h = 0;
    std::string colorspace = "420"; // y4m default when C is absent
    std::istringstream hs(header.substr(9));
    std::string tok;
    while (hs >> tok) {
        switch (tok[0]) {
        case 'W': w = std::atoll(tok.c_str() + 1); break;
        case 'H': h = std::atoll(tok.c_str() + 1); break;
        case 'C': colorspace = tok.substr(1); break;
        default: break; // F/I/A/X tags carry no pixel data we need
        }
    }
    if (w <= 0 || h <= 0)
        throw FormatError("y4m header missing W/H: " + path);

    bool is420;
    if (colorspace == "420" || colorspace == "420jpeg" || colorspace == "420mpeg2" ||
        colorspace == "420paldv")
        is420 = true;
    else if (colorspace == "444")
        is420 = false;
    else
        throw FormatError("unsupported y4m colorspace C" + colorspace + " (need 8-bit 420/444)");
    if (is420 && (w % 2 != 0 || h % 2 != 0))
        throw FormatError("odd dimensions with 420 subsampling: " + path);

    std::int64_t cw = is420 ? w / 2 : w;
    std::int64_t ch = is420 ? h / 2 : h;
    std::size_t frame_bytes = static_cast<std::size_t>(w * h + 2 * cw * ch);
    std::vector<std::uint8_t> buf(frame_bytes);

    std::vector<VideoTensor> frames;
    std::string frame_line;
    while (std::getline(is, frame_line)) {
        if (frame_line.empty())
            continue;
        if (frame_line.rfind("FRAME", 0) != 0)
            throw FormatError("corrupt y4m: expected FRAME marker in " + path);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(frame_bytes));
        if (static_cast<std::size_t>(is.gcount()) != frame_bytes)
            throw FormatError("corrupt y4m: truncated frame in " + path);
        VideoTensor fr(1, h, w);
        const std::uint8_t* yp = buf.data();
        const std::uint8_t* up = yp + w * h;
        const std::uint8_t* vp = up + cw * ch;
        for (std::int64_t yy = 0; yy < h; ++yy)
            for (std::int64_t xx = 0; xx < w; ++xx) {
                double yv = yp[yy * w + xx];
                std::int64_t cy = is420 ? yy / 2 : yy;
                std::int64_t cx = is420 ? xx / 2 : xx;
                double cb = up[cy * cw + cx];
                double cr = vp[cy * cw + cx];
                double r, g, b;
                detail::ycbcr_to_rgb(yv, cb, cr, r, g, b);
                fr.at(0, yy, xx, 0) = std::clamp(r / 255.0, 0.0, 1.0);
                fr.at(0, yy, xx, 1) = std::clamp(g / 255.0, 0.0, 1.0);
                fr.at(0, yy, xx, 2) = std::clamp(b / 255.0, 0.0, 1.0);
            }
        frames.push_back(std::move(fr));
    }
    if (frames.empty())
        throw FormatError("y4m contains no frames: " + path);

    VideoTensor out(static_cast<std::int64_t>(frames.size()), h, w);
    for (std::size_t t = 0; t < frames.size(); ++t)
        std::copy(frames[t].data.begin(), frames[t].data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(t * frames[t].data.size()));
    return out;
}

// Raw format: f32 LE, per frame three planes (R, G, B), each height x width.
// Dims come from a JSON sidecar at <path>.json: {"t":..,"h":..,"w":..,"c":3}.
inline VideoTensor load_raw(const std::string& path)
{
    nlohmann::json side;
    {
        std::ifstream js = open_in(path + ".json", false);
        try {
            js >> side;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad raw sidecar " + path + ".json: " + e.what());
        }
    }
    if (!side.contains("t") || !side.contains("h") || !side.contains("w"))
        throw FormatError("raw sidecar missing t/h/w: " + path + ".json");
    if (side.value("c", 3) != 3)
        throw FormatError("raw sidecar must declare c=3: " + path + ".json");
    std::int64_t t = side["t"].get<std::int64_t>();
    std::int64_t h = side["h"].get<std::int64_t>();
    std::int64_t w = side["w"].get<std::int64_t>();
    if (t < 1 || h < 1 || w < 1)
        throw FormatError("raw sidecar has non-positive dims: " + path + ".json");

    std::ifstream is = open_in(path);
    is.seekg(0, std::ios::end);
    std::int64_t bytes = is.tellg();
    is.seekg(0);
    std::int64_t expected = t * h * w * 3 * static_cast<std::int64_t>(sizeof(float));
    if (bytes != expected)
        throw FormatError("raw file size mismatch vs sidecar: " + path);

    std::vector<float> plane(static_cast<std::size_t>(h * w));
    VideoTensor out(t, h, w);
    for (std::int64_t f = 0; f < t; ++f)
        for (int c = 0; c < 3; ++c) {
            is.read(reinterpret_cast<char*>(plane.data()),
                    static_cast<std::streamsize>(plane.size() * sizeof(float)));
            if (!is)
                throw FormatError("truncated raw file: " + path);
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    out.at(f, y, x, c) = plane[static_cast<std::size_t>(y * w + x)];
        }
    return out;
}

inline VideoTensor load_video(const std::string& path, VideoFormat fmt)
{
    return fmt == VideoFormat::y4m ? load_y4m(path) : load_raw(path);
}

inline VideoTensor load_video(const std::string& path)
{
    return load_video(path, format_from_path(path));
}

inline void save_raw(const VideoTensor& v, const std::string& path)
{
    {
        nlohmann::json side = {{"t", v.frames}, {"h", v.height}, {"w", v.width}, {"c", 3}};
        std::ofstream js = open_out(path + ".json", false);
        js << side.dump() << "\n";
    }
    std::ofstream os = open_out(path);
    std::vector<float> plane(static_cast<std::size_t>(v.height * v.width));
    for (std::int64_t f = 0; f < v.frames; ++f)
        for (int c = 0; c < 3; ++c) {
            for (std::int64_t y = 0; y < v.height; ++y)
                for (std::int64_t x = 0; x < v.width; ++x)
                    plane[static_cast<std::size_t>(y * v.width + x)] =
                        static_cast<float>(v.at(f, y, x, c));
            os.write(reinterpret_cast<const char*>(plane.data()),
                     static_cast<std::streamsize>(plane.size() * sizeof(float)));
        }
}

// Writes C444 to avoid chroma loss on the way out.
inline void save_y4m(const VideoTensor& v, const std::string& path)
{
    std::ofstream os = open_out(path);
    os << "YUV4MPEG2 W" << v.width << " H" << v.height << " F25:1 Ip A1:1 C444\n";
    std::size_t plane_sz = static_cast<std::size_t>(v.height * v.width);
    std::vector<std::uint8_t> yp(plane_sz), up(plane_sz), vp(plane_sz);
    for (std::int64_t f = 0; f < v.frames; ++f) {
        os << "FRAME\n";
        for (std::int64_t y = 0; y < v.height; ++y)
            for (std::int64_t x = 0; x < v.width; ++x) {
                double yy, cb, cr;
                detail::rgb_to_ycbcr(v.at(f, y, x, 0) * 255.0, v.at(f, y, x, 1) * 255.0,
                                     v.at(f, y, x, 2) * 255.0, yy, cb, cr);
                std::size_t i = static_cast<std::size_t>(y * v.width + x);
                yp[i] = detail::to_u8(yy);
                up[i] = detail::to_u8(cb);
                vp[i] = detail::to_u8(cr);
            }
        os.write(reinterpret_cast<const char*>(yp.data()), static_cast<std::streamsize>(plane_sz));
        os.write(reinterpret_cast<const char*>(up.data()), static_cast<std::streamsize>(plane_sz));
        os.write(reinterpret_cast<const char*>(vp.data()), static_cast<std::streamsize>(plane_sz));
    }
}

inline void save_video(const VideoTensor& v, const std::string& path)
{
    if (format_from_path(path) == VideoFormat::y4m)
        save_y4m(v, path);
    else
        save_raw(v, path);
}

} // namespace skipsr
