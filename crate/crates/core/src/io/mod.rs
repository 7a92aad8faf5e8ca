//! File formats: PNG images, PFM depth maps, PLY point clouds and 3DGS
//! exports, JSON scene manifests and training checkpoints.

mod checkpoint;
mod manifest;
mod pfm;
mod ply;
mod png_io;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use manifest::{load_scene, LoadedScene, SceneManifest, ViewEntry, ROTATION_TOLERANCE};
pub use pfm::{encode_pfm, parse_pfm, read_pfm, write_pfm, Endian};
pub use ply::{
    encode_ply, export_3dgs_ply, gaussians_to_3dgs_ply, import_3dgs_ply, parse_ply,
    point_cloud_from_ply, read_ply, read_ply_points, write_ply, write_ply_points, PlyElement,
    PlyEncoding, PlyFile, PlyProperty, PropertyKind, ScalarType,
};
pub use png_io::{quantize, read_png, write_png};
