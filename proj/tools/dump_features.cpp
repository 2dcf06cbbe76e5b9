// Writes the backbone features of one image to an .srta file (key "features").
// Used to compare the C++ graphs against the reference implementation.

#include <iostream>

#include "siamreid/embedding.hpp"
#include "siamreid/tensor_archive.hpp"

int main(int argc, char** argv) {
  if (argc != 5) {
    std::cerr << "usage: " << argv[0] << " <backbone> <weights_dir> <image> <out.srta>\n";
    return 2;
  }
  try {
    const auto name = siamreid::parse_backbone(argv[1]);
    const auto net = siamreid::build_network(siamreid::BackboneSpec::defaults_for(name), 0, argv[2]);
    siamreid::TensorArchive out;
    out["features"] = net.features(siamreid::load_image(std::filesystem::path(argv[3])));
    siamreid::save_archive(out, argv[4]);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
