#pragma once

// In-memory training data: blurred observations with their exposure
// trajectories, and sharp held-out views for evaluation.

#include "isnerf/blur.hpp"

namespace isnerf {

struct TrainView {
    std::string file;
    ImageBuffer blurred;
    Intrinsics intrinsics;
    Posed start;  // exposure trajectory endpoints
    Posed end;
    int n = 8;
};

struct HoldoutView {
    std::string file;
    ImageBuffer sharp;
    Intrinsics intrinsics;
    Posed pose;
    PixelMask mirror_mask;  // may be empty
    PixelMask rod_mask;     // may be empty
};

struct Dataset {
    std::vector<TrainView> views;
    std::vector<HoldoutView> holdout;
    Aabb scene_box;
    Vec3d background = Vec3d::Zero();

    void validate() const {
        if (views.size() < 2) throw InvalidArgument("dataset needs at least 2 blurred images");
        for (const auto& v : views) {
            v.intrinsics.validate();
            if (v.blurred.width != v.intrinsics.width || v.blurred.height != v.intrinsics.height)
                throw DimensionMismatch("image " + v.file + " does not match its intrinsics");
            if (v.n < 1) throw InvalidArgument("view " + v.file + " has n < 1");
        }
        for (const auto& h : holdout) {
            h.intrinsics.validate();
            if (h.sharp.width != h.intrinsics.width || h.sharp.height != h.intrinsics.height)
                throw DimensionMismatch("holdout image " + h.file + " does not match its intrinsics");
        }
    }
};

}  // namespace isnerf
