// Renders one scene and writes it at every level of every distortion family as PPM files.
#include <cstdio>
#include <filesystem>

#include "gando/core/fs.hpp"
#include "gando/core/image_io.hpp"
#include "gando/degrade/pool.hpp"
#include "gando/synthkit/scene.hpp"

using namespace gando;

int main(int argc, char** argv) {
    const std::filesystem::path out = argc > 1 ? argv[1] : "gallery";
    synthkit::SceneSpec spec;
    spec.num_objects = 3;
    const auto [image, labels] = synthkit::render_scene(spec, 2024);
    write_atomic(out / "clean.ppm", encode_ppm(image));

    for (auto f : {DistortionFamily::gaussian, DistortionFamily::defocus, DistortionFamily::camshake, DistortionFamily::awgn}) {
        const auto pool = degrade::make_pool(f, 0, f == DistortionFamily::camshake ? std::vector<int>{1, 2, 3} : std::vector<int>{});
        for (int j = 1; j <= pool.size(); ++j) {
            const Image img = degrade::apply_level(image, pool, j, 99);
            write_atomic(out / (to_string(f) + "_" + std::to_string(j) + ".ppm"), encode_ppm(img));
        }
    }
    std::printf("wrote gallery to %s\n", out.string().c_str());
}
