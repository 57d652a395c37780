"""Flexible continuous-aperture array weighted-sum-rate optimization"""
