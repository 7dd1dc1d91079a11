#include "isnerf/pipeline.hpp"
#include "isnerf/scene_forge.hpp"
#include "test_util.hpp"

using namespace isnerf;

TEST(DeskTrain, HoldoutPsnrRisesOverFirst500Iterations) {
    testutil::TempDir dir("desk_train");
    TrajectorySpec spec;
    spec.views = 8;
    spec.n = 4;
    spec.width = spec.height = 32;
    spec.seed = 5;
    generate_dataset(desk_scene(), spec, dir.path());
    const Dataset data = load_dataset(dir.path());

    RunConfig cfg;
    cfg.seed = 5;
    cfg.render.coarse_samples = 16;
    cfg.render.fine_samples = 16;
    cfg.render.scatter.paths = 3;
    cfg.render.scatter.samples_per_path = 4;
    cfg.field.trunk_width = 32;
    cfg.field.color_width = 16;
    cfg.islm.width = 32;
    cfg.train.iterations = 500;
    cfg.train.batch_rays = 256;
    cfg.train.islm_warmup = 100;
    cfg.train.eval_every = 100;

    const auto run = run_training<float>(cfg, data);
    ASSERT_EQ(run.train.log.size(), 5u);
    for (std::size_t i = 1; i < run.train.log.size(); ++i)
        EXPECT_GT(run.train.log[i].psnr_holdout, run.train.log[i - 1].psnr_holdout)
            << "window ending at iteration " << run.train.log[i].iteration;
    for (const auto& r : run.train.log) std::cout << r.iteration << " " << r.psnr_holdout << "\n";
}
