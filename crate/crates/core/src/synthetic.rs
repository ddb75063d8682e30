//! Small synthetic trajectories with inline screenshots, used by the test
//! suites and for offline smoke runs.

use image::{ImageFormat, Rgb, RgbImage};
use rand::Rng;

use crate::model::{
    ActionKind, ActionRecord, ImageRef, IntentStatement, Interaction, Platform, Rect, Trajectory,
};
use crate::seed::rng_for;

const ELEMENTS: [&str; 8] = [
    "Search", "Adirondack", "Add to cart", "Checkout", "Menu", "Flights", "Date picker", "Submit",
];
const GOALS: [&str; 5] = [
    "book a flight to LAX on Friday",
    "order an olive pizza",
    "find Adirondack chairs under $200",
    "subscribe to the weekly newsletter",
    "delete all emails from sender X",
];

pub fn png_bytes(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("png encoding to memory");
    buf.into_inner()
}

/// A `w`x`h` image with a single colour derived from `shade`.
pub fn solid_png(w: u32, h: u32, shade: u8) -> Vec<u8> {
    png_bytes(&RgbImage::from_pixel(w, h, Rgb([shade, shade / 2, 255 - shade])))
}

/// Deterministic synthetic trajectory with `n` steps.
pub fn trajectory(id: &str, n: u32, seed: u64) -> Trajectory {
    let mut rng = rng_for(seed, &["synthetic", id]);
    let steps = (1..=n)
        .map(|index| {
            let element = ELEMENTS[rng.random_range(0..ELEMENTS.len())];
            let action = match rng.random_range(0..4) {
                0 => ActionRecord::type_text(element, format!("query {index}")),
                1 => ActionRecord {
                    element_name: Some(element.to_string()),
                    ..ActionRecord::new(ActionKind::Hover)
                },
                _ => ActionRecord::click(element)
                    .with_bbox(Rect::new(2 * index as i64, 4, 12, 8)),
            };
            Interaction {
                index,
                screenshot: ImageRef::Inline(solid_png(4, 4, (index * 37 % 251) as u8)),
                action,
                original_index: None,
            }
        })
        .collect();
    let goal = GOALS[rng.random_range(0..GOALS.len())];
    Trajectory {
        id: id.to_string(),
        platform: Platform::Web,
        app_or_site: None,
        steps,
        gold_intent: IntentStatement::new(goal),
        gold_intent_raw: None,
    }
}

/// `count` trajectories with lengths cycling through 1..=`max_len`.
pub fn corpus(count: usize, max_len: u32, seed: u64) -> Vec<Trajectory> {
    (0..count)
        .map(|i| trajectory(&format!("syn-{i:03}"), (i as u32 % max_len) + 1, seed))
        .collect()
}
