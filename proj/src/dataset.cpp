#include "wsseg/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "wsseg/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wsseg {

namespace {

json point_to_json(const Point& p) { return json::array({p.x, p.y}); }

Point point_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2) throw std::runtime_error("annotation point must be [x,y]");
    return Point{j[0].get<int>(), j[1].get<int>()};
}

json annotation_to_json(const PointAnnotation& ann) {
    json nodules = json::array();
    for (const NodulePoints& np : ann.nodules) {
        nodules.push_back({{"left", point_to_json(np.left)},
                           {"right", point_to_json(np.right)},
                           {"top", point_to_json(np.top)},
                           {"bottom", point_to_json(np.bottom)}});
    }
    return nodules;
}

PointAnnotation annotation_from_json(const std::string& id, const json& j) {
    PointAnnotation ann;
    ann.image_id = id;
    for (const json& n : j) {
        NodulePoints np;
        np.left = point_from_json(n.at("left"));
        np.right = point_from_json(n.at("right"));
        np.top = point_from_json(n.at("top"));
        np.bottom = point_from_json(n.at("bottom"));
        ann.nodules.push_back(np);
    }
    return ann;
}

json config_to_json_obj(const SynthConfig& cfg) {
    return {{"size", cfg.size},
            {"min_nodules", cfg.min_nodules},
            {"max_nodules", cfg.max_nodules},
            {"shape", cfg.shape == SynthConfig::Shape::kEllipse ? "ellipse" : "blob"},
            {"harmonic_amplitude", cfg.harmonic_amplitude},
            {"background_mean", cfg.background_mean},
            {"contrast", cfg.contrast},
            {"blur_sigma", cfg.blur_sigma},
            {"speckle_strength", cfg.speckle_strength},
            {"oracle_precision", cfg.oracle_precision},
            {"oracle_recall", cfg.oracle_recall},
            {"boundary_noise", cfg.boundary_noise},
            {"annotation_jitter", cfg.annotation_jitter},
            {"seed", cfg.seed}};
}

SynthConfig config_from_json_obj(const json& j) {
    SynthConfig cfg;
    cfg.size = j.value("size", cfg.size);
    cfg.min_nodules = j.value("min_nodules", cfg.min_nodules);
    cfg.max_nodules = j.value("max_nodules", cfg.max_nodules);
    const std::string shape = j.value("shape", std::string("blob"));
    if (shape == "ellipse")
        cfg.shape = SynthConfig::Shape::kEllipse;
    else if (shape == "blob")
        cfg.shape = SynthConfig::Shape::kBlob;
    else
        throw std::runtime_error("unknown shape: " + shape);
    cfg.harmonic_amplitude = j.value("harmonic_amplitude", cfg.harmonic_amplitude);
    cfg.background_mean = j.value("background_mean", cfg.background_mean);
    cfg.contrast = j.value("contrast", cfg.contrast);
    cfg.blur_sigma = j.value("blur_sigma", cfg.blur_sigma);
    cfg.speckle_strength = j.value("speckle_strength", cfg.speckle_strength);
    cfg.oracle_precision = j.value("oracle_precision", cfg.oracle_precision);
    cfg.oracle_recall = j.value("oracle_recall", cfg.oracle_recall);
    cfg.boundary_noise = j.value("boundary_noise", cfg.boundary_noise);
    cfg.annotation_jitter = j.value("annotation_jitter", cfg.annotation_jitter);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    f << text;
    if (!f) throw std::runtime_error("failed to write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<Sample> generate_corpus(const SynthConfig& cfg, int count, int index_offset) {
    if (count < 0) throw std::invalid_argument("generate_corpus: negative count");
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(gen_sample(cfg, index_offset + i));
    return out;
}

void write_corpus(const std::string& dir, const std::vector<Sample>& samples,
                  const SynthConfig& cfg) {
    const fs::path root(dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    fs::create_directories(root / "promptmasks");

    json annotations = json::object();
    json ids = json::array();
    for (const Sample& s : samples) {
        write_png_gray((root / "images" / (s.id + ".png")).string(), s.image);
        write_png_mask((root / "masks" / (s.id + ".png")).string(), s.gt);
        if (s.has_prompt)
            write_png_mask((root / "promptmasks" / (s.id + ".png")).string(), s.prompt_mask);
        annotations[s.id] = annotation_to_json(s.annotation);
        ids.push_back(s.id);
    }
    write_text(root / "annotations.json", annotations.dump(2) + "\n");

    const json manifest = {{"config", config_to_json_obj(cfg)}, {"count", samples.size()},
                           {"ids", ids}};
    write_text(root / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<Sample> load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const fs::path images = root / "images";
    if (!fs::is_directory(images))
        throw std::runtime_error("dataset: missing images directory under " + dir);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".pgm")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());

    json annotations = json::object();
    const fs::path ann_path = root / "annotations.json";
    if (!fs::exists(ann_path))
        throw std::runtime_error("dataset: missing annotations.json under " + dir);
    annotations = json::parse(read_text(ann_path));

    std::vector<Sample> out;
    for (const fs::path& img_path : files) {
        const std::string id = img_path.stem().string();
        const fs::path mask_path = root / "masks" / (id + ".png");
        if (!fs::exists(mask_path)) {
            std::cerr << "warning: no mask for " << img_path.string() << ", skipping\n";
            continue;
        }
        Sample s;
        s.id = id;
        try {
            s.image = read_image_gray(img_path.string());
            s.gt = read_mask(mask_path.string());
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset: unreadable file: " + std::string(e.what()));
        }
        if (s.image.height != s.gt.height || s.image.width != s.gt.width)
            throw std::runtime_error("dataset: image/mask size mismatch for " + id);

        if (annotations.contains(id))
            s.annotation = annotation_from_json(id, annotations.at(id));
        else
            s.annotation.image_id = id;

        const fs::path prompt_path = root / "promptmasks" / (id + ".png");
        if (fs::exists(prompt_path)) {
            try {
                s.prompt_mask = read_mask(prompt_path.string());
            } catch (const std::exception& e) {
                throw std::runtime_error("dataset: unreadable file: " + std::string(e.what()));
            }
            s.has_prompt = true;
        } else {
            s.prompt_mask = MaskGrid(s.gt.height, s.gt.width);
            s.has_prompt = false;
        }
        out.push_back(std::move(s));
    }
    return out;
}

SynthConfig read_manifest(const std::string& dir) {
    const json manifest = json::parse(read_text(fs::path(dir) / "manifest.json"));
    return config_from_json_obj(manifest.at("config"));
}

std::string synth_config_to_json(const SynthConfig& cfg) {
    return config_to_json_obj(cfg).dump(2) + "\n";
}

SynthConfig synth_config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

}  // namespace wsseg
