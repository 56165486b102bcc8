use super::BinaryMask;

const TEXTURE_KERNEL: usize = 5;

/// Binary dilation with a `size × size` square (odd `size`).
///
/// Out-of-image neighbours are skipped, which for a max filter is the same
/// as reflecting the border.
pub fn dilate(mask: &BinaryMask, size: usize) -> BinaryMask {
    square_filter(mask, size, true)
}

/// Binary erosion with a `size × size` square (odd `size`).
pub fn erode(mask: &BinaryMask, size: usize) -> BinaryMask {
    square_filter(mask, size, false)
}

/// Invert, then close with a 5×5 square (dilate followed by erode).
///
/// Applied to `M_in ∧ M_ca` this yields the connected region that the
/// adaptive texture is cut from.
pub fn close_texture(mask: &BinaryMask) -> BinaryMask {
    erode(&dilate(&mask.not(), TEXTURE_KERNEL), TEXTURE_KERNEL)
}

// A square structuring element is separable: filter rows, then columns.
fn square_filter(mask: &BinaryMask, size: usize, dilation: bool) -> BinaryMask {
    assert!(size % 2 == 1, "structuring element must have odd size");
    let (w, h) = mask.dims();
    let r = (size / 2) as isize;
    let pick = |acc: bool, v: bool| if dilation { acc || v } else { acc && v };

    let mut rows = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let lo = (x as isize - r).max(0) as usize;
            let hi = ((x as isize + r) as usize).min(w - 1);
            let v = (lo..=hi).fold(!dilation, |acc, xx| pick(acc, mask.get(xx, y)));
            rows.set(x, y, v);
        }
    }
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        let lo = (y as isize - r).max(0) as usize;
        let hi = ((y as isize + r) as usize).min(h - 1);
        for x in 0..w {
            let v = (lo..=hi).fold(!dilation, |acc, yy| pick(acc, rows.get(x, yy)));
            out.set(x, y, v);
        }
    }
    out
}
