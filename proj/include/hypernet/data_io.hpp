#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hypernet/geometry.hpp"
#include "hypernet/tensor.hpp"

namespace hn {

// Malformed files, bad annotations, missing paths.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite losses and other numeric failures.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Annotation {
    Box box;
    int class_id = 1;  // 1..N
};

struct Sample {
    std::string id;
    TensorF image;  // 3xHxW, values in [0,1]
    std::vector<Annotation> annotations;

    int height() const { return image.dim(1); }
    int width() const { return image.dim(2); }
};

using Dataset = std::vector<Sample>;

struct ShapesDatasetConfig {
    int count = 100;
    int image_size = 128;
    int num_classes = 3;  // 1 rectangle, 2 ellipse, 3 triangle
    std::uint64_t seed = 0;
    int min_shapes = 1;
    int max_shapes = 4;
};

// Deterministic synthetic detection data: filled shapes on a noise background
// with exact bounding boxes.
Dataset generate_shapes_dataset(const ShapesDatasetConfig& cfg);

// Binary P6 pixmap, 8-bit.
void write_ppm(const std::string& path, const TensorF& image);
TensorF read_ppm(const std::string& path);

// 8-bit grayscale P5 graymap.
void write_pgm(const std::string& path, const std::vector<std::vector<double>>& rows);

// One JSON document per image: {id, width, height, objects:[...]}.
void write_annotations(const std::string& path, const Sample& sample);
std::vector<Annotation> read_annotations(const std::string& path, std::string* id_out = nullptr);

// sample id "x" -> x.ppm + x.json in dir; dataset.json is the index.
void write_sample(const std::string& dir, const Sample& sample);
Sample read_sample(const std::string& dir, const std::string& id);
void write_dataset(const std::string& dir, const Dataset& ds, int num_classes);
Dataset read_dataset(const std::string& dir);
int dataset_num_classes(const std::string& dir);

struct NamedTensor {
    std::string name;
    const TensorF* tensor;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::string config_json;  // architecture snapshot
    std::string stage_tag;    // which training step produced it
    std::vector<std::pair<std::string, TensorF>> tensors;
};

// Versioned container: magic, version, length-prefixed JSON header, then
// length-prefixed named little-endian float records.
void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::string& stage_tag, const std::vector<NamedTensor>& tensors);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hn
