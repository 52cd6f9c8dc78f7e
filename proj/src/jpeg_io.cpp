#include <cstddef>
#include <cstdio>

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "ldmshield/image.hpp"

namespace ldms {

Image jpeg_roundtrip(const Image& img, int quality);

namespace {
struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    std::longjmp(err->jump, 1);
}
}  // namespace

Image jpeg_roundtrip(const Image& img, int quality) {
    if (img.channels() != 3) throw std::invalid_argument("jpeg: expects 3-channel images");
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg: quality must be 1..100");
    int H = img.height(), W = img.width();

    std::vector<unsigned char> rgb(static_cast<std::size_t>(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(img.data.at(y, x, c), 0.0, 1.0);
                rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }

    // compress to memory
    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    {
        jpeg_compress_struct cinfo;
        JpegError jerr;
        cinfo.err = jpeg_std_error(&jerr.mgr);
        jerr.mgr.error_exit = jpeg_error_exit;
        if (setjmp(jerr.jump)) {
            jpeg_destroy_compress(&cinfo);
            if (buf) std::free(buf);
            throw std::runtime_error("jpeg compression failed");
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buf, &buf_size);
        cinfo.image_width = static_cast<JDIMENSION>(W);
        cinfo.image_height = static_cast<JDIMENSION>(H);
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * W * 3;
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    // decompress back
    Image out(H, W, 3);
    {
        jpeg_decompress_struct dinfo;
        JpegError jerr;
        dinfo.err = jpeg_std_error(&jerr.mgr);
        jerr.mgr.error_exit = jpeg_error_exit;
        if (setjmp(jerr.jump)) {
            jpeg_destroy_decompress(&dinfo);
            std::free(buf);
            throw std::runtime_error("jpeg decompression failed");
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buf, buf_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&dinfo);
        std::vector<unsigned char> row(static_cast<std::size_t>(W) * 3);
        int y = 0;
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW rp = row.data();
            jpeg_read_scanlines(&dinfo, &rp, 1);
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c)
                    out.data.at(y, x, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
            ++y;
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    std::free(buf);
    return out;
}

}  // namespace ldms
