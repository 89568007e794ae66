#include "hypernet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace hn {

namespace {

struct ShapeDraw {
    int kind;  // 1 rectangle, 2 ellipse, 3 triangle
    Box box;
    double apex_u;  // triangle apex position within the box
    float color[3];
};

bool inside_shape(const ShapeDraw& s, double x, double y) {
    const Box& b = s.box;
    if (x < b.x_min || x >= b.x_max || y < b.y_min || y >= b.y_max) return false;
    switch (s.kind) {
        case 1:
            return true;
        case 2: {
            const double nx = (x - b.cx()) / (0.5 * b.width());
            const double ny = (y - b.cy()) / (0.5 * b.height());
            return nx * nx + ny * ny <= 1.0;
        }
        default: {
            // apex on the top edge, base corners at the bottom
            const double ax = b.x_min + s.apex_u * b.width(), ay = b.y_min;
            const double bx = b.x_min, by = b.y_max;
            const double cx = b.x_max, cy = b.y_max;
            auto side = [](double x0, double y0, double x1, double y1, double px, double py) {
                return (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
            };
            const double d1 = side(ax, ay, bx, by, x, y);
            const double d2 = side(bx, by, cx, cy, x, y);
            const double d3 = side(cx, cy, ax, ay, x, y);
            const bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
            const bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
            return !(has_neg && has_pos);
        }
    }
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw DataError(msg);
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(is), "checkpoint truncated while reading " + what);
    return v;
}

}  // namespace

Dataset generate_shapes_dataset(const ShapesDatasetConfig& cfg) {
    Dataset ds;
    std::mt19937_64 gen(cfg.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int S = cfg.image_size;

    for (int n = 0; n < cfg.count; ++n) {
        Sample s;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "sample_%05d", n);
        s.id = idbuf;
        s.image = TensorF({3, S, S});
        for (auto& v : s.image.data) v = static_cast<float>(0.35 + 0.25 * uni(gen));

        const int n_shapes =
            cfg.min_shapes + static_cast<int>(uni(gen) * (cfg.max_shapes - cfg.min_shapes + 1));
        std::vector<ShapeDraw> shapes;
        for (int k = 0; k < n_shapes; ++k) {
            ShapeDraw sd;
            sd.kind = 1 + static_cast<int>(uni(gen) * cfg.num_classes);
            sd.kind = std::min(sd.kind, cfg.num_classes);
            bool placed = false;
            // sides scale with the image so small canvases stay in bounds
            const double min_side = std::min(14.0, S / 4.0);
            const double max_side = std::min(56.0, 0.6 * S);
            for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
                const double w = min_side + uni(gen) * (max_side - min_side);
                const double h = min_side + uni(gen) * (max_side - min_side);
                const double x0 = uni(gen) * (S - w - 2.0) + 1.0;
                const double y0 = uni(gen) * (S - h - 2.0) + 1.0;
                sd.box = Box{x0, y0, x0 + w, y0 + h};
                placed = true;
                for (const ShapeDraw& other : shapes)
                    if (iou(sd.box, other.box) > 0.2) placed = false;
            }
            if (!placed) continue;
            sd.apex_u = 0.3 + 0.4 * uni(gen);
            // high-contrast fill: each channel near 0 or near 1
            for (int c = 0; c < 3; ++c)
                sd.color[c] = static_cast<float>(uni(gen) < 0.5 ? 0.05 + 0.1 * uni(gen)
                                                                : 0.85 + 0.1 * uni(gen));
            shapes.push_back(sd);
        }

        for (const ShapeDraw& sd : shapes) {
            const int y0 = static_cast<int>(std::floor(sd.box.y_min));
            const int y1 = static_cast<int>(std::ceil(sd.box.y_max));
            const int x0 = static_cast<int>(std::floor(sd.box.x_min));
            const int x1 = static_cast<int>(std::ceil(sd.box.x_max));
            for (int y = std::max(0, y0); y < std::min(S, y1); ++y)
                for (int x = std::max(0, x0); x < std::min(S, x1); ++x)
                    if (inside_shape(sd, x + 0.5, y + 0.5))
                        for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = sd.color[c];
            s.annotations.push_back({sd.box, sd.kind});
        }
        ds.push_back(std::move(s));
    }
    return ds;
}

void write_ppm(const std::string& path, const TensorF& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_ppm: image must be 3xHxW");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    os << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    require(static_cast<bool>(os), "short write to " + path);
}

TensorF read_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot open " + path);
    std::string magic;
    is >> magic;
    require(magic == "P6", path + ": not a P6 pixmap (magic '" + magic + "' at byte 0)");
    int w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    require(is.good() && w > 0 && h > 0, path + ": malformed pixmap header");
    require(maxval == 255, path + ": unsupported maxval " + std::to_string(maxval));
    is.get();  // single whitespace after header
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(static_cast<bool>(is),
            path + ": truncated payload at byte " + std::to_string(is.gcount()));
    TensorF img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) =
                    static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
    return img;
}

void write_pgm(const std::string& path, const std::vector<std::vector<double>>& rows) {
    require(!rows.empty() && !rows[0].empty(), "write_pgm: empty image");
    const int h = static_cast<int>(rows.size()), w = static_cast<int>(rows[0].size());
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    os << "P5\n" << w << " " << h << "\n255\n";
    for (const auto& row : rows) {
        require(static_cast<int>(row.size()) == w, "write_pgm: ragged rows");
        for (double v : row)
            os.put(static_cast<char>(
                static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
}

void write_annotations(const std::string& path, const Sample& sample) {
    json objects = json::array();
    for (const Annotation& a : sample.annotations)
        objects.push_back({{"class", a.class_id},
                           {"x_min", a.box.x_min},
                           {"y_min", a.box.y_min},
                           {"x_max", a.box.x_max},
                           {"y_max", a.box.y_max}});
    json doc = {{"id", sample.id},
                {"width", sample.width()},
                {"height", sample.height()},
                {"objects", objects}};
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    os << doc.dump(2) << "\n";
}

std::vector<Annotation> read_annotations(const std::string& path, std::string* id_out) {
    std::ifstream is(path);
    require(static_cast<bool>(is), "cannot open " + path);
    json doc;
    try {
        is >> doc;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    std::vector<Annotation> out;
    try {
        if (id_out) *id_out = doc.at("id").get<std::string>();
        for (const json& o : doc.at("objects")) {
            Annotation a;
            a.class_id = o.at("class").get<int>();
            a.box = Box{o.at("x_min").get<double>(), o.at("y_min").get<double>(),
                        o.at("x_max").get<double>(), o.at("y_max").get<double>()};
            require(a.box.valid(), path + ": degenerate box (x_max <= x_min or y_max <= y_min)");
            require(a.class_id >= 1, path + ": class id must be >= 1");
            out.push_back(a);
        }
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return out;
}

void write_sample(const std::string& dir, const Sample& sample) {
    write_ppm((fs::path(dir) / (sample.id + ".ppm")).string(), sample.image);
    write_annotations((fs::path(dir) / (sample.id + ".json")).string(), sample);
}

Sample read_sample(const std::string& dir, const std::string& id) {
    Sample s;
    s.id = id;
    s.image = read_ppm((fs::path(dir) / (id + ".ppm")).string());
    s.annotations = read_annotations((fs::path(dir) / (id + ".json")).string());
    for (const Annotation& a : s.annotations)
        require(a.box.x_max <= s.width() && a.box.y_max <= s.height() && a.box.x_min >= 0 &&
                    a.box.y_min >= 0,
                id + ": annotation outside image bounds");
    return s;
}

void write_dataset(const std::string& dir, const Dataset& ds, int num_classes) {
    fs::create_directories(dir);
    json ids = json::array();
    for (const Sample& s : ds) {
        write_sample(dir, s);
        ids.push_back(s.id);
    }
    json index = {{"ids", ids}, {"num_classes", num_classes}};
    std::ofstream os((fs::path(dir) / "dataset.json").string());
    require(static_cast<bool>(os), "cannot write dataset index in " + dir);
    os << index.dump(2) << "\n";
}

static json read_index(const std::string& dir) {
    const std::string path = (fs::path(dir) / "dataset.json").string();
    std::ifstream is(path);
    require(static_cast<bool>(is), "no dataset index at " + path);
    json index;
    try {
        is >> index;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return index;
}

Dataset read_dataset(const std::string& dir) {
    json index = read_index(dir);
    Dataset ds;
    for (const json& id : index.at("ids")) ds.push_back(read_sample(dir, id.get<std::string>()));
    return ds;
}

int dataset_num_classes(const std::string& dir) {
    return read_index(dir).at("num_classes").get<int>();
}

static constexpr char kMagic[8] = {'H', 'Y', 'P', 'E', 'R', 'N', 'E', 'T'};

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::string& stage_tag, const std::vector<NamedTensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), "cannot open " + path + " for writing");
    os.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(os, 1);
    json header = {{"config", json::parse(config_json)}, {"stage", stage_tag},
                   {"precision", "f32"}};
    const std::string hs = header.dump();
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.tensor->shape.size()));
        for (int d : t.tensor->shape) write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(t.tensor->size() * 4));
        os.write(reinterpret_cast<const char*>(t.tensor->ptr()),
                 static_cast<std::streamsize>(t.tensor->size() * 4));
    }
    require(static_cast<bool>(os), "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), "cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    require(static_cast<bool>(is) && std::memcmp(magic, kMagic, 8) == 0,
            path + ": bad checkpoint magic");
    Checkpoint ck;
    ck.version = read_raw<std::uint32_t>(is, "version");
    require(ck.version == 1, path + ": unknown checkpoint version " + std::to_string(ck.version));
    const auto hlen = read_raw<std::uint32_t>(is, "header length");
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    require(static_cast<bool>(is), path + ": truncated header");
    try {
        json header = json::parse(hs);
        ck.config_json = header.at("config").dump();
        ck.stage_tag = header.at("stage").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(path + ": bad checkpoint header: " + e.what());
    }
    const auto count = read_raw<std::uint32_t>(is, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto nlen = read_raw<std::uint32_t>(is, "name length");
        require(nlen < 4096, path + ": implausible tensor name length");
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        const auto ndim = read_raw<std::uint32_t>(is, "rank");
        require(ndim >= 1 && ndim <= 8, path + ": implausible tensor rank");
        std::vector<int> shape;
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<int>(read_raw<std::uint32_t>(is, "extent")));
            n *= static_cast<std::size_t>(shape.back());
        }
        const auto bytes = read_raw<std::uint64_t>(is, "payload length");
        require(bytes == n * 4, path + ": tensor '" + name + "' payload length mismatch");
        TensorF t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(bytes));
        require(static_cast<bool>(is), path + ": truncated tensor '" + name + "'");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace hn
