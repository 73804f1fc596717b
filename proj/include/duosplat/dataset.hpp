// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace duosplat {

struct DatasetSpec {
    int n_subjects = 2;
    int novel_views = 4; ///< per subject, evenly spaced starting at 45 degrees
    int resolution = 64;
    std::uint64_t base_seed = 0;
    SubjectConfig subject;
    RenderViewOptions render;
    double camera_radius = 2.5;
    double focal_scale = 1.1;
};

struct ManifestEntry {
    std::string subject;
    std::uint64_t seed = 0;
    std::string view;
    double azimuth_deg = 0.0;
    std::string image; ///< paths relative to the dataset root
    std::string mask;
    std::string depth;
    std::string camera_file;
    CameraModel camera;
};

struct SubjectRecord {
    std::string id;
    std::uint64_t seed = 0;
    double height = 0.0;
};

/// Dataset index stored as `<root>/manifest.json`.
struct Manifest {
    static constexpr int kVersion = 1;
    DatasetSpec spec;
    std::vector<SubjectRecord> subjects;
    std::vector<ManifestEntry> entries;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json &j);
};

/// Azimuths used for the novel views of every subject.
std::vector<double> novel_azimuths(int count);

std::string subject_id(int index);

/// Generates subjects base_seed .. base_seed + n_subjects - 1 and writes four canonical
/// views plus the novel views for each. Re-running with the same spec rewrites identical bytes.
Manifest make_dataset(const DatasetSpec &spec, const std::filesystem::path &out_dir);

/// Read-side view of a dataset directory.
class Dataset {
  public:
    static Dataset open(const std::filesystem::path &root);

    const Manifest &manifest() const { return manifest_; }
    const std::filesystem::path &root() const { return root_; }
    std::size_t subject_count() const { return manifest_.subjects.size(); }
    int resolution() const { return manifest_.spec.resolution; }

    /// Loads a stored view; throws IoError when the view is missing.
    ViewBundle load(std::size_t subject, const std::string &view) const;
    bool has_view(std::size_t subject, const std::string &view) const;
    std::vector<std::string> views_of(std::size_t subject) const;

    /// Regenerates the subject scene from its recorded seed.
    SubjectScene scene(std::size_t subject) const;
    /// Renders a view of the subject at any azimuth with the dataset's camera ring and
    /// quantizes the colors like the stored images.
    ViewBundle render_at(std::size_t subject, double azimuth_deg) const;
    CameraModel camera_at(double azimuth_deg) const;

  private:
    const ManifestEntry *find(std::size_t subject, const std::string &view) const;

    std::filesystem::path root_;
    Manifest manifest_;
};

} // namespace duosplat
