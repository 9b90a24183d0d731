#include "scaf/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <stdexcept>

#include <jpeglib.h>
#include <png.h>

namespace scaf {

ImageU8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    ImageU8 img;
    img.width = (int)w;
    img.height = (int)h;
    img.channels = channels;
    img.pixels.resize((size_t)w * h * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.pixels.data() + (size_t)y * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("write_png: channels must be 1 or 3");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.pixels.data() +
                                        (size_t)y * img.width * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

namespace {
struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};
void jpeg_error_exit(j_common_ptr cinfo) {
    longjmp(reinterpret_cast<JpegErrorMgr*>(cinfo->err)->jump, 1);
}
} // namespace

ImageU8 jpeg_roundtrip(const ImageU8& rgb, int quality) {
    if (quality < 1 || quality > 100)
        throw std::runtime_error("jpeg quality must be in [1,100], got " +
                                 std::to_string(quality));
    if (rgb.channels != 3)
        throw std::runtime_error("jpeg_roundtrip: expects RGB input");

    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    {
        jpeg_compress_struct cinfo;
        JpegErrorMgr err;
        cinfo.err = jpeg_std_error(&err.pub);
        err.pub.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_compress(&cinfo);
            free(buf);
            throw std::runtime_error("jpeg encode failed");
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buf, &buf_size);
        cinfo.image_width = rgb.width;
        cinfo.image_height = rgb.height;
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = const_cast<JSAMPROW>(
                rgb.pixels.data() + (size_t)cinfo.next_scanline * rgb.width * 3);
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    ImageU8 out;
    {
        jpeg_decompress_struct dinfo;
        JpegErrorMgr err;
        dinfo.err = jpeg_std_error(&err.pub);
        err.pub.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_decompress(&dinfo);
            free(buf);
            throw std::runtime_error("jpeg decode failed");
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buf, buf_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&dinfo);
        out.width = (int)dinfo.output_width;
        out.height = (int)dinfo.output_height;
        out.channels = 3;
        out.pixels.resize((size_t)out.width * out.height * 3);
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW row =
                out.pixels.data() + (size_t)dinfo.output_scanline * out.width * 3;
            jpeg_read_scanlines(&dinfo, &row, 1);
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    free(buf);
    return out;
}

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t({img.channels, img.height, img.width});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at(c, y, x) = img.at(y, x, c) / 255.0;
    return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
    ImageU8 img;
    img.channels = t.channels();
    img.height = t.height();
    img.width = t.width();
    img.pixels.resize((size_t)img.width * img.height * img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double v = std::clamp(t.at(c, y, x), 0.0, 1.0);
                img.at(y, x, c) = (uint8_t)std::lround(v * 255.0);
            }
    return img;
}

} // namespace scaf
