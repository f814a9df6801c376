//! On-disk formats: OBJ meshes, the binary model container, PNG images and
//! masks, and the plain-text parameter, lighting, landmark and mouth files.

mod images;
mod model_file;
mod obj;
mod text;

pub use images::{load_image, load_mask, save_image, save_mask};
pub use model_file::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use text::{
    landmarks_from_text, landmarks_to_text, lighting_from_text, lighting_to_text, load_landmarks, load_lighting,
    load_mouth_loop, load_params, mouth_loop_from_text, save_lighting, save_params,
};
