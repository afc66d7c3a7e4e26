use crate::error::Result;
use crate::model::{Mask, SegmentationMap};

/// Binary dilation by a square structuring element of side `2 * radius + 1`,
/// clipped at the image border. Radius 0 returns the mask unchanged.
///
/// The square is separable, so the dilation runs as a horizontal pass
/// followed by a vertical pass, each a running window count.
pub fn pad_mask(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let grid = mask.grid();
    let (h, w) = (grid.height(), grid.width());
    let src = mask.bits();

    let mut horizontal = vec![false; h * w];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        dilate_line(row, radius, &mut horizontal[r * w..(r + 1) * w]);
    }

    let mut out = vec![false; h * w];
    let mut column = vec![false; h];
    let mut dilated = vec![false; h];
    for c in 0..w {
        for r in 0..h {
            column[r] = horizontal[r * w + c];
        }
        dilate_line(&column, radius, &mut dilated);
        for r in 0..h {
            out[r * w + c] = dilated[r];
        }
    }
    Mask::from_bits(grid, out).expect("dilation preserves the grid")
}

fn dilate_line(line: &[bool], radius: usize, out: &mut [bool]) {
    let n = line.len();
    // count of set cells inside [i - radius, i + radius]
    let mut count: usize = line[..(radius + 1).min(n)].iter().filter(|&&b| b).count();
    for i in 0..n {
        out[i] = count > 0;
        let entering = i + radius + 1;
        if entering < n && line[entering] {
            count += 1;
        }
        if i >= radius && line[i - radius] {
            count -= 1;
        }
    }
}

/// Pads every segment of a segmentation independently.
pub fn pad_segmentation(seg: &SegmentationMap, radius: usize) -> Result<SegmentationMap> {
    if radius == 0 {
        return Ok(seg.clone());
    }
    seg.map_masks(|m| pad_mask(m, radius))
}
