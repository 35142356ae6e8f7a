use std::fs;
use std::path::Path;

use gtb_core::augment::{augment_dataset, read_labels, write_image, write_labels, ImageBuffer, Label, Pipeline};
use gtb_core::metrics::BBox;

fn seed_dataset(dir: &Path, n: usize) {
    for i in 0..n {
        let px: Vec<u8> = (0..24 * 16 * 3).map(|k| ((k * 31 + i * 17) % 256) as u8).collect();
        let img = ImageBuffer::new(24, 16, 3, px).unwrap();
        write_image(&dir.join(format!("img{i}.png")), &img).unwrap();
        write_labels(
            &dir.join(format!("img{i}.txt")),
            &[Label {
                class_id: 0,
                bbox: BBox::new(0.25, 0.5, 0.125, 0.25),
            }],
        )
        .unwrap();
    }
    let gray = ImageBuffer::new(8, 8, 1, (0..64).collect()).unwrap();
    write_image(&dir.join("gray.pgm"), &gray).unwrap();
}

#[test]
fn empty_directory_gives_empty_manifest() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = augment_dataset(input.path(), out.path(), &"hflip".parse().unwrap(), 0).unwrap();
    assert!(m.entries.is_empty() && m.skipped.is_empty());
    assert!(out.path().join("manifest.json").exists());
}

#[test]
fn hflip_mirrors_every_label() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    seed_dataset(input.path(), 3);
    let m = augment_dataset(input.path(), out.path(), &"hflip".parse().unwrap(), 4).unwrap();
    assert_eq!(m.entries.len(), 4);
    for i in 0..3 {
        let labels = read_labels(&out.path().join(format!("img{i}.txt"))).unwrap();
        assert_eq!(labels.len(), 1);
        assert!((labels[0].bbox.cx - 0.75).abs() < 1e-6);
    }
    // unlabelled image gets an empty label file
    assert_eq!(fs::read_to_string(out.path().join("gray.txt")).unwrap(), "");
    assert!(m.entries.iter().all(|e| e.ops == ["hflip"]));
}

#[test]
fn reruns_are_byte_identical() {
    let input = tempfile::tempdir().unwrap();
    seed_dataset(input.path(), 3);
    let pipeline: Pipeline = "hflip(p=0.5),vflip(p=0.5),brightness(alpha=1.1,beta=-5),erase(p=0.5)".parse().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = augment_dataset(input.path(), a.path(), &pipeline, 11).unwrap();
    let mb = augment_dataset(input.path(), b.path(), &pipeline, 11).unwrap();
    assert_eq!(
        ma.entries.iter().map(|e| (&e.ops, e.seed)).collect::<Vec<_>>(),
        mb.entries.iter().map(|e| (&e.ops, e.seed)).collect::<Vec<_>>()
    );
    for e in &ma.entries {
        let name = Path::new(&e.output).file_name().unwrap();
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    let mc = augment_dataset(input.path(), c.path(), &pipeline, 12).unwrap();
    assert_ne!(ma.entries.iter().map(|e| e.seed).collect::<Vec<_>>(), mc.entries.iter().map(|e| e.seed).collect::<Vec<_>>());
}

#[test]
fn unreadable_image_is_skipped() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    seed_dataset(input.path(), 1);
    fs::write(input.path().join("broken.png"), b"not a png").unwrap();
    let m = augment_dataset(input.path(), out.path(), &"vflip".parse().unwrap(), 0).unwrap();
    assert_eq!(m.entries.len(), 2);
    assert_eq!(m.skipped.len(), 1);
    assert!(m.skipped[0].ends_with("broken.png"));
}
