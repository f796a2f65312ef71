"""Regenerates the GIF decoder fixtures (requires Pillow)."""
from PIL import Image

W, H = 37, 23


def pattern():
    im = Image.new("RGB", (W, H))
    px = im.load()
    for y in range(H):
        for x in range(W):
            px[x, y] = ((x * 7) % 256, (y * 11) % 256, ((x + y) * 13) % 256)
    return im


def mask():
    im = Image.new("L", (W, H))
    px = im.load()
    for y in range(H):
        for x in range(W):
            px[x, y] = 255 if (x * x + 2 * y * y) % 17 < 6 else 0
    return im


if __name__ == "__main__":
    rgb = pattern().quantize(colors=256, dither=Image.Dither.NONE).convert("RGB")
    rgb.save("color.ppm")
    rgb.quantize(colors=256, dither=Image.Dither.NONE).save("color.gif", interlace=False)
    rgb.quantize(colors=256, dither=Image.Dither.NONE).save("color_interlaced.gif", interlace=True)
    m = mask()
    m.save("mask.pgm")
    m.convert("P").save("mask.gif", interlace=False)
    m.convert("P").save("mask_interlaced.gif", interlace=True)
    import gzip
    with open("mask.pgm", "rb") as src, gzip.GzipFile("mask.pgm.gz", "wb", mtime=0) as dst:
        dst.write(src.read())
