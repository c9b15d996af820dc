from .designer import DroopDesigner
from .preprocessing import load_case, load_profiles
